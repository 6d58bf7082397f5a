"""Report rendering: delimited output plus matplotlib figures on disk.

Every CLI subcommand that produces series data accepts --report DIR; this
module writes the CSV next to a PNG of the same stem so results can be
eyeballed or post-processed without re-running anything.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .bench import BenchmarkResult
from .milestones import MilestoneResult
from .profiler import ProfileReport

_FIGSIZE = (6.0, 3.6)


def _ensure(directory: str) -> str:
    os.makedirs(directory, exist_ok=True)
    return directory


def write_milestone_report(result: MilestoneResult, directory: str) -> list[str]:
    """Per-epoch series as CSV plus a training-curve figure."""
    _ensure(directory)
    stem = os.path.join(directory, f"milestone{result.milestone_id}")
    written = []

    csv_path = stem + ".csv"
    names = sorted(result.series)
    rows = max((len(result.series[n]) for n in names), default=0)
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["epoch"] + names)
        for i in range(rows):
            w.writerow([i] + [
                result.series[n][i] if i < len(result.series[n]) else ""
                for n in names
            ])
    written.append(csv_path)

    metrics_path = stem + "_metrics.csv"
    with open(metrics_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["metric", "value"])
        for k, v in result.metrics.items():
            w.writerow([k, v])
    written.append(metrics_path)

    if names:
        fig, ax = plt.subplots(figsize=_FIGSIZE)
        for n in names:
            ax.plot(result.series[n], label=n)
        ax.set_xlabel("epoch")
        ax.set_ylabel("value")
        ax.set_title(f"milestone {result.milestone_id}: "
                     f"{'pass' if result.passed else 'FAIL'}")
        ax.legend(fontsize=8)
        fig.tight_layout()
        png = stem + ".png"
        fig.savefig(png, dpi=120)
        plt.close(fig)
        written.append(png)
    return written


def write_bench_report(result: BenchmarkResult, name: str,
                       directory: str) -> list[str]:
    """Raw samples as CSV plus a sample/CI figure."""
    _ensure(directory)
    stem = os.path.join(directory, f"bench_{name}")
    csv_path = stem + ".csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["sample_index", "wall_ns"])
        for i, s in enumerate(result.samples_ns):
            w.writerow([i, s])

    fig, ax = plt.subplots(figsize=_FIGSIZE)
    xs = range(len(result.samples_ns))
    ax.plot(xs, [s / 1e6 for s in result.samples_ns], "o-", ms=4,
            label="samples")
    ax.axhline(result.mean_ns / 1e6, color="k", lw=1, label="mean")
    ax.axhspan(result.ci_lo_ns / 1e6, result.ci_hi_ns / 1e6, alpha=0.2,
               label=f"{int(result.ci_level * 100)}% CI")
    ax.set_xlabel("run")
    ax.set_ylabel("wall time (ms)")
    ax.set_title(f"{name}: {result.mean_ns / 1e6:.3f} ms mean, "
                 f"{result.repeats} runs")
    ax.legend(fontsize=8)
    fig.tight_layout()
    png = stem + ".png"
    fig.savefig(png, dpi=120)
    plt.close(fig)
    return [csv_path, png]


def write_profile_report(report: ProfileReport, name: str,
                         directory: str) -> list[str]:
    """Region table as CSV plus a time-fraction bar chart."""
    _ensure(directory)
    stem = os.path.join(directory, f"profile_{name}")
    csv_path = stem + ".csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["label", "wall_ns", "alloc_bytes", "peak_bytes", "macs",
                    "fraction"])
        for r in report.regions:
            w.writerow([r.label, r.wall_ns, r.alloc_bytes, r.peak_bytes,
                        r.macs, f"{r.fraction:.6f}"])

    fig, ax = plt.subplots(figsize=_FIGSIZE)
    labels = [r.label for r in report.regions]
    ax.bar(labels, [r.fraction for r in report.regions])
    ax.set_ylabel("fraction of region time")
    ax.set_title(f"{name}: {report.total_wall_ns / 1e6:.2f} ms total")
    fig.tight_layout()
    png = stem + ".png"
    fig.savefig(png, dpi=120)
    plt.close(fig)
    return [csv_path, png]
