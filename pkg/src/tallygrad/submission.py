"""Benchmark submission record: schema, emission, and validation."""

from __future__ import annotations

import json
import os
import platform
import re
from dataclasses import asdict, dataclass
from datetime import datetime, timezone

SCHEMA_VERSION = 1

_TIMESTAMP_RE = re.compile(
    r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d+)?(Z|[+-]\d{2}:\d{2})$"
)


@dataclass
class Metrics:
    latency_ms_p50: float
    latency_ms_p99: float
    throughput_per_s: float
    accuracy: float
    model_bytes: int


@dataclass
class SystemInfo:
    os_name: str
    cpu_model: str
    logical_cores: int
    ram_bytes: int


@dataclass
class Improvement:
    speedup: float
    compression_ratio: float
    accuracy_delta: float


@dataclass
class Submission:
    schema_version: int
    system: SystemInfo
    model_id: str
    task_id: str
    seed: int
    baseline_metrics: Metrics
    optimized_metrics: Metrics
    improvement: Improvement
    timestamp: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())


def _cpu_model() -> str:
    name = platform.processor()
    if not name:
        try:
            with open("/proc/cpuinfo", "r", encoding="utf-8") as f:
                for line in f:
                    if line.lower().startswith("model name"):
                        name = line.split(":", 1)[1].strip()
                        break
        except OSError:
            pass
    return name or platform.machine() or "unknown"


def _ram_bytes() -> int:
    try:
        return os.sysconf("SC_PAGE_SIZE") * os.sysconf("SC_PHYS_PAGES")
    except (ValueError, OSError, AttributeError):
        return 0


def system_info() -> SystemInfo:
    return SystemInfo(
        os_name=platform.system(),
        cpu_model=_cpu_model(),
        logical_cores=os.cpu_count() or 1,
        ram_bytes=_ram_bytes(),
    )


def utc_timestamp() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def build_submission(model_id: str, task_id: str, seed: int,
                     baseline: Metrics, optimized: Metrics) -> Submission:
    """Improvement figures are derived, never hand-entered, so the emitted
    record always satisfies its own arithmetic invariants."""
    return Submission(
        schema_version=SCHEMA_VERSION,
        system=system_info(),
        model_id=model_id,
        task_id=task_id,
        seed=seed,
        baseline_metrics=baseline,
        optimized_metrics=optimized,
        improvement=Improvement(
            speedup=baseline.latency_ms_p50 / optimized.latency_ms_p50,
            compression_ratio=baseline.model_bytes / optimized.model_bytes,
            accuracy_delta=optimized.accuracy - baseline.accuracy,
        ),
        timestamp=utc_timestamp(),
    )


_METRIC_FIELDS = ("latency_ms_p50", "latency_ms_p99", "throughput_per_s",
                  "accuracy", "model_bytes")
_SYSTEM_FIELDS = {"os_name": str, "cpu_model": str, "logical_cores": int,
                  "ram_bytes": int}
_REL_TOL = 1e-6


def _check_metrics(obj, prefix: str, violations: list[str]) -> None:
    if not isinstance(obj, dict):
        violations.append(f"{prefix} must be an object")
        return
    for field in _METRIC_FIELDS:
        if field not in obj:
            violations.append(f"missing {prefix}.{field}")
        elif not isinstance(obj[field], (int, float)) or isinstance(obj[field], bool):
            violations.append(f"{prefix}.{field} must be a number")


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= _REL_TOL * max(abs(a), abs(b), 1.0)


def validate_submission(path: str) -> tuple[bool, list[str]]:
    """Check required fields, types, invariant arithmetic, and timestamp
    format; every violation is collected, not just the first."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as e:
            return False, [f"not valid JSON: {e}"]
    violations: list[str] = []
    if not isinstance(obj, dict):
        return False, ["submission must be a JSON object"]

    for field in ("schema_version", "system", "model_id", "task_id", "seed",
                  "baseline_metrics", "optimized_metrics", "improvement",
                  "timestamp"):
        if field not in obj:
            violations.append(f"missing {field}")

    system = obj.get("system")
    if isinstance(system, dict):
        for field, typ in _SYSTEM_FIELDS.items():
            if field not in system:
                violations.append(f"missing system.{field}")
            elif not isinstance(system[field], typ):
                violations.append(f"system.{field} must be {typ.__name__}")
    elif "system" in obj:
        violations.append("system must be an object")

    _check_metrics(obj.get("baseline_metrics", {}), "baseline_metrics",
                   violations)
    _check_metrics(obj.get("optimized_metrics", {}), "optimized_metrics",
                   violations)

    imp = obj.get("improvement")
    if isinstance(imp, dict):
        for field in ("speedup", "compression_ratio", "accuracy_delta"):
            if field not in imp:
                violations.append(f"missing improvement.{field}")
        base = obj.get("baseline_metrics", {})
        opt = obj.get("optimized_metrics", {})
        ready = (isinstance(base, dict) and isinstance(opt, dict)
                 and all(isinstance(base.get(f), (int, float)) for f in _METRIC_FIELDS)
                 and all(isinstance(opt.get(f), (int, float)) for f in _METRIC_FIELDS))
        if ready:
            if "speedup" in imp and not _close(
                    imp["speedup"],
                    base["latency_ms_p50"] / opt["latency_ms_p50"]):
                violations.append("improvement.speedup inconsistent with "
                                  "latency_ms_p50 ratio")
            if "compression_ratio" in imp and not _close(
                    imp["compression_ratio"],
                    base["model_bytes"] / opt["model_bytes"]):
                violations.append("improvement.compression_ratio inconsistent "
                                  "with model_bytes ratio")
            if "accuracy_delta" in imp and not _close(
                    imp["accuracy_delta"], opt["accuracy"] - base["accuracy"]):
                violations.append("improvement.accuracy_delta inconsistent "
                                  "with accuracy difference")
    elif "improvement" in obj:
        violations.append("improvement must be an object")

    ts = obj.get("timestamp")
    if ts is not None and (not isinstance(ts, str)
                           or not _TIMESTAMP_RE.match(ts)):
        violations.append("timestamp is not RFC 3339 UTC")

    return (len(violations) == 0, violations)
