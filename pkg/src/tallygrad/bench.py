"""Microbenchmark harness: warm-up, repeated timing, Student-t confidence
intervals, and Welch's test for comparing two results.

Single timings are meaningless on a real machine (scheduler noise, cache
state, frequency scaling), so everything here reports distributions.  The
t-distribution machinery is implemented directly via the regularized
incomplete beta function; no statistics package is involved.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass
from typing import Callable

from .errors import DomainError, LevelMismatch

# --- Student-t distribution ------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-12:
            break
    return h


def _betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_cdf(t: float, df: float) -> float:
    if df <= 0:
        raise DomainError("degrees of freedom must be positive")
    if t == 0.0:
        return 0.5
    x = df / (df + t * t)
    tail = 0.5 * _betainc(df / 2.0, 0.5, x)
    return 1.0 - tail if t > 0 else tail


def t_ppf(p: float, df: float) -> float:
    """Inverse CDF by bisection (monotone, so this is exact enough)."""
    if not 0.0 < p < 1.0:
        raise DomainError("p must lie in (0, 1)")
    if p == 0.5:
        return 0.0
    lo, hi = -1.0, 1.0
    while t_cdf(lo, df) > p:
        lo *= 2.0
        if lo < -1e12:
            break
    while t_cdf(hi, df) < p:
        hi *= 2.0
        if hi > 1e12:
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_cdf(mid, df) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * max(1.0, abs(hi)):
            break
    return 0.5 * (lo + hi)


def t_critical(confidence_level: float, df: float) -> float:
    """Two-sided critical value: P(|T| <= t*) = level."""
    if not 0.0 < confidence_level < 1.0:
        raise DomainError("confidence level must lie in (0, 1)")
    return t_ppf(0.5 + confidence_level / 2.0, df)


# --- timing ------------------------------------------------------------------

_timer_resolution: int | None = None


def timer_resolution_ns() -> int:
    """Smallest positive tick of the monotonic clock, measured once."""
    global _timer_resolution
    if _timer_resolution is None:
        best = None
        for _ in range(2000):
            a = time.perf_counter_ns()
            b = time.perf_counter_ns()
            if b > a and (best is None or b - a < best):
                best = b - a
        _timer_resolution = best or 1
    return _timer_resolution


class _pinned:
    """Pin the process to one logical CPU for the duration (variance control);
    silently does nothing where affinity control is unavailable."""

    def __enter__(self):
        self._saved = None
        try:
            self._saved = os.sched_getaffinity(0)
            os.sched_setaffinity(0, {min(self._saved)})
        except (AttributeError, OSError):
            pass
        return self

    def __exit__(self, *exc):
        if self._saved is not None:
            try:
                os.sched_setaffinity(0, self._saved)
            except OSError:
                pass
        return False


@dataclass
class BenchmarkResult:
    samples_ns: list[int]
    mean_ns: float
    std_ns: float
    ci_level: float
    ci_lo_ns: float
    ci_hi_ns: float
    warmup: int
    repeats: int
    seed: int

    def to_json(self) -> str:
        return json.dumps({
            "samples_ns": self.samples_ns,
            "mean_ns": self.mean_ns,
            "std_ns": self.std_ns,
            "ci": {"level": self.ci_level, "lo_ns": self.ci_lo_ns,
                   "hi_ns": self.ci_hi_ns},
            "warmup": self.warmup,
            "repeats": self.repeats,
            "seed": self.seed,
            "timer_resolution_ns": timer_resolution_ns(),
        })


def summarize(samples_ns: list[int], confidence_level: float,
              warmup: int = 0, seed: int = 0) -> BenchmarkResult:
    """CI arithmetic on an existing sample list (mean +/- t* s / sqrt(n))."""
    n = len(samples_ns)
    if n < 2:
        raise DomainError("need at least 2 samples")
    mean = sum(samples_ns) / n
    var = sum((s - mean) ** 2 for s in samples_ns) / (n - 1)
    std = math.sqrt(var)
    half = t_critical(confidence_level, n - 1) * std / math.sqrt(n)
    return BenchmarkResult(
        samples_ns=list(samples_ns), mean_ns=mean, std_ns=std,
        ci_level=confidence_level, ci_lo_ns=mean - half, ci_hi_ns=mean + half,
        warmup=warmup, repeats=n, seed=seed,
    )


def benchmark(f: Callable[[], object], warmup_count: int = 3,
              repeat_count: int = 10, confidence_level: float = 0.95,
              seed: int = 0) -> BenchmarkResult:
    """Discard warmup_count runs, then time repeat_count runs of f."""
    if repeat_count < 2:
        raise DomainError("repeat_count must be >= 2")
    if warmup_count < 0:
        raise DomainError("warmup_count must be >= 0")
    if not 0.0 < confidence_level < 1.0:
        raise DomainError("confidence level must lie in (0, 1)")
    timer_resolution_ns()
    samples = []
    with _pinned():
        for _ in range(warmup_count):
            f()
        for _ in range(repeat_count):
            t0 = time.perf_counter_ns()
            f()
            samples.append(time.perf_counter_ns() - t0)
    return summarize(samples, confidence_level, warmup=warmup_count, seed=seed)


@dataclass
class Comparison:
    speedup: float
    significant: bool
    t_statistic: float
    df: float


def compare(a: BenchmarkResult, b: BenchmarkResult) -> Comparison:
    """speedup = mean(a)/mean(b); significance by Welch's two-sided t-test
    at the shared confidence level."""
    if a.ci_level != b.ci_level:
        raise LevelMismatch(f"levels differ: {a.ci_level} vs {b.ci_level}")
    na, nb = len(a.samples_ns), len(b.samples_ns)
    va, vb = a.std_ns ** 2, b.std_ns ** 2
    se_sq = va / na + vb / nb
    if se_sq == 0.0:
        same = a.mean_ns == b.mean_ns
        return Comparison(speedup=a.mean_ns / b.mean_ns,
                          significant=not same,
                          t_statistic=0.0 if same else math.inf,
                          df=float(na + nb - 2))
    t_stat = (a.mean_ns - b.mean_ns) / math.sqrt(se_sq)
    df = se_sq ** 2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    crit = t_critical(a.ci_level, df)
    return Comparison(speedup=a.mean_ns / b.mean_ns,
                      significant=abs(t_stat) > crit,
                      t_statistic=t_stat, df=df)
