"""Region profiling (time, framework allocations, MACs) and Amdahl analysis."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

from . import tracker
from .errors import DomainError


@dataclass
class RegionStats:
    label: str
    wall_ns: int
    alloc_bytes: int
    peak_bytes: int
    macs: int
    fraction: float = 0.0


@dataclass
class ProfileReport:
    regions: list[RegionStats]
    total_wall_ns: int
    overhead_ns: int

    def to_json(self) -> str:
        return json.dumps({
            "regions": [{"label": r.label, "wall_ns": r.wall_ns,
                         "alloc_bytes": r.alloc_bytes,
                         "peak_bytes": r.peak_bytes, "macs": r.macs,
                         "fraction": r.fraction} for r in self.regions],
            "total_wall_ns": self.total_wall_ns,
            "overhead_ns": self.overhead_ns,
        })


def _measure_overhead() -> int:
    """Upper bound on the cost of timing an empty region."""
    worst = 0
    for _ in range(64):
        t0 = time.perf_counter_ns()
        t1 = time.perf_counter_ns()
        worst = max(worst, t1 - t0)
    return worst * 10 + 1000


def profile(regions) -> ProfileReport:
    """Run each labeled callable once under timing + allocation + MAC
    counting.  `regions` is a list of (label, fn) pairs or a dict."""
    if isinstance(regions, dict):
        regions = list(regions.items())
    overhead = _measure_overhead()
    stats: list[RegionStats] = []
    for label, fn in regions:
        before = tracker.snapshot()
        tracker.reset_peak()
        base_live = tracker.live_bytes()
        t0 = time.perf_counter_ns()
        fn()
        wall = time.perf_counter_ns() - t0
        after = tracker.snapshot()
        stats.append(RegionStats(
            label=label,
            wall_ns=wall,
            alloc_bytes=after.total_alloc_bytes - before.total_alloc_bytes,
            peak_bytes=max(tracker.peak_bytes() - base_live, 0),
            macs=after.macs - before.macs,
        ))
    total = sum(r.wall_ns for r in stats)
    for r in stats:
        r.fraction = r.wall_ns / total if total else 0.0
    return ProfileReport(regions=stats, total_wall_ns=total,
                         overhead_ns=overhead)


def amdahl_speedup(fraction_optimized: float, local_speedup: float) -> float:
    """1 / ((1 - f) + f / s): the whole-program gain from speeding up the
    fraction f of runtime by a factor s."""
    if not 0.0 <= fraction_optimized <= 1.0:
        raise DomainError("fraction_optimized must lie in [0, 1]")
    if local_speedup < 1.0:
        raise DomainError("local_speedup must be >= 1")
    return 1.0 / ((1.0 - fraction_optimized)
                  + fraction_optimized / local_speedup)
