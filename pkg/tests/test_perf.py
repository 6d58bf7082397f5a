import math
import time

import numpy as np
import pytest

import tallygrad as tg
from tallygrad import tracker
from tallygrad.bench import (
    benchmark,
    compare,
    summarize,
    t_cdf,
    t_critical,
    timer_resolution_ns,
)
from tallygrad.compress import distillation_loss, magnitude_prune
from tallygrad.errors import DomainError, InvalidRange, LevelMismatch
from tallygrad.nn import LinearLayer, cross_entropy_loss
from tallygrad.profiler import amdahl_speedup, profile
from tallygrad.quant import (
    dequantize,
    quantize,
    quantize_linear,
    quantized_linear_eval,
)
from tallygrad.rng import Rng
from tallygrad.tensor import DType, Tensor


def rand(shape, seed=0, lo=-1.0, hi=1.0, requires_grad=False):
    n = int(np.prod(shape)) if shape else 1
    vals = Rng(seed).uniform_array(n, lo, hi).astype(np.float32)
    return Tensor(vals, shape=shape, requires_grad=requires_grad)


class TestProfile:
    def test_empty_region_below_overhead_bound(self):
        report = profile([("empty", lambda: None)])
        assert report.regions[0].wall_ns <= report.overhead_ns

    def test_fractions_sum_to_one(self):
        report = profile([
            ("a", lambda: time.sleep(0.002)),
            ("b", lambda: time.sleep(0.001)),
            ("c", lambda: None),
        ])
        assert sum(r.fraction for r in report.regions) == pytest.approx(
            1.0, abs=1e-6)

    def test_matmul_macs(self):
        a, b = rand((7, 11), 1), rand((11, 13), 2)
        report = profile([("mm", lambda: tg.matmul(a, b))])
        assert report.regions[0].macs == 7 * 11 * 13

    def test_alloc_bytes_counted(self):
        report = profile([("alloc", lambda: tg.zeros((256,)))])
        assert report.regions[0].alloc_bytes >= 1024

    def test_conv_dominates_cnn_forward(self):
        from tallygrad.spatial import Conv2dLayer, conv2d_naive
        layer = Conv2dLayer(3, 8, 3, Rng(0), requires_grad=False)
        x = rand((2, 3, 16, 16), 3)
        y = conv2d_naive(x, layer)  # warm shape
        report = profile([
            ("conv", lambda: conv2d_naive(x, layer)),
            ("relu", lambda: tg.elementwise("mul", y, y)),
            ("reduce", lambda: y.sum()),
        ])
        conv_fraction = report.regions[0].fraction
        assert conv_fraction > 0.5

    def test_json_fields(self):
        import json
        report = profile([("r", lambda: None)])
        obj = json.loads(report.to_json())
        entry = obj["regions"][0]
        assert {"label", "wall_ns", "alloc_bytes", "peak_bytes",
                "macs"} <= entry.keys()


class TestAmdahl:
    def test_paper_anchor(self):
        s = amdahl_speedup(0.7, 2.0)
        assert 1.53 <= s <= 1.54

    def test_unit_local_speedup(self):
        for f in (0.0, 0.3, 1.0):
            assert amdahl_speedup(f, 1.0) == pytest.approx(1.0)

    def test_full_fraction(self):
        assert amdahl_speedup(1.0, 4.0) == pytest.approx(4.0)

    def test_strictly_below_local_speedup(self):
        rng = Rng(1)
        for _ in range(50):
            f = rng.uniform(0.0, 0.999)
            s = rng.uniform(1.0, 50.0)
            assert amdahl_speedup(f, s) < s

    def test_domain(self):
        with pytest.raises(DomainError):
            amdahl_speedup(1.2, 2.0)
        with pytest.raises(DomainError):
            amdahl_speedup(0.5, 0.5)


class TestQuantize:
    def test_formula(self):
        t = rand((100,), 3, lo=-1.0, hi=2.0)
        q = quantize(t)
        lo, hi = float(t.data.min()), float(t.data.max())
        assert q.scale == pytest.approx((hi - lo) / 255.0, rel=1e-6)
        assert -128 <= q.zero_point <= 127
        assert q.data.dtype == np.int8

    def test_round_trip_bound_grid(self):
        lo, hi = -1.0, 3.0
        xs = np.linspace(lo, hi, 10_001).astype(np.float32)
        t = Tensor(xs)
        q = quantize(t, calibration=(lo, hi))
        back = dequantize(q)
        assert np.abs(back.nd - xs).max() <= q.scale / 2.0 + 1e-6

    def test_constant_tensor_exact(self):
        t = tg.full((16,), 7.25)
        q = quantize(t)
        assert np.unique(q.data).size == 1
        assert np.array_equal(dequantize(q).nd, t.nd)

    def test_zero_constant(self):
        q = quantize(tg.zeros((4,)))
        assert np.all(dequantize(q).nd == 0.0)

    def test_invalid_range(self):
        with pytest.raises(InvalidRange):
            quantize(rand((4,)), calibration=(1.0, -1.0))

    def test_footprint_4x(self):
        t = rand((1000,), 5)
        q = quantize(t)
        assert q.memory_footprint() == 1008
        assert q.memory_footprint() * 4 <= t.memory_footprint() + 32

    def test_quantized_linear_reference_path(self):
        tg.enable_autograd()
        try:
            layer = LinearLayer(16, 8, Rng(2))
        finally:
            tg.disable_autograd()
        ql = quantize_linear(layer)
        x = rand((4, 16), 7)
        exact = layer.forward(x)
        approx = quantized_linear_eval(ql, x)
        assert approx.shape == (4, 8)
        # per-output error bounded by sum_j |x_j| * (w scale / 2) + bias slack
        bound = (np.abs(x.nd).sum(axis=1, keepdims=True)
                 * (ql.weight.scale / 2.0) + ql.bias.scale / 2.0 + 1e-5)
        assert np.all(np.abs(approx.nd - exact.nd) <= bound)

    def test_zero_weights_zero_output(self):
        tg.enable_autograd()
        try:
            layer = LinearLayer(4, 3, Rng(0))
        finally:
            tg.disable_autograd()
        layer.weight.data[...] = 0.0
        layer.bias.data[...] = 0.0
        ql = quantize_linear(layer)
        out = quantized_linear_eval(ql, rand((2, 4), 1))
        assert np.all(out.nd == 0.0)


class TestPrune:
    def test_keeps_largest_magnitudes(self):
        t = Tensor([0.1, -0.5, 0.3, -0.05])
        result = magnitude_prune(t, 0.5)
        assert result.pruned.tolist() == pytest.approx([0.0, -0.5, 0.3, 0.0])
        assert result.mask.tolist() == [0.0, 1.0, 1.0, 0.0]
        assert result.achieved_sparsity == 0.5

    def test_identity_and_total(self):
        t = rand((20,), 1)
        assert np.array_equal(magnitude_prune(t, 0.0).pruned.nd, t.nd)
        assert np.all(magnitude_prune(t, 1.0).pruned.nd == 0.0)

    def test_exact_floor_counts(self):
        rng = Rng(2)
        for _ in range(20):
            n = rng.randint(50) + 1
            s = rng.uniform(0.0, 1.0)
            t = rand((n,), rng.randint(1000))
            result = magnitude_prune(t, s)
            k = int(s * n)
            assert int((result.mask.nd == 0).sum()) == k
            assert result.achieved_sparsity == k / n

    def test_tie_break_by_index(self):
        t = Tensor([0.5, 0.5, 0.5, 0.5])
        result = magnitude_prune(t, 0.5)
        assert result.mask.tolist() == [0.0, 0.0, 1.0, 1.0]

    def test_domain(self):
        with pytest.raises(DomainError):
            magnitude_prune(rand((4,)), 1.5)


class TestDistillation:
    def test_matching_logits_zero_kl(self):
        logits = rand((3, 6), 1)
        loss = distillation_loss(logits, logits, temperature=3.0, mix=0.0)
        assert loss.item() == pytest.approx(0.0, abs=1e-6)

    def test_mix_one_is_cross_entropy(self):
        student = rand((4, 5), 2)
        teacher = rand((4, 5), 3)
        targets = Tensor([0, 2, 4, 1], dtype=DType.INT64)
        a = distillation_loss(student, teacher, 2.0, 1.0, targets).item()
        b = cross_entropy_loss(student, targets).item()
        assert a == b

    def test_kl_nonnegative(self):
        rng = Rng(4)
        for i in range(20):
            s = rand((2, 7), i, lo=-3, hi=3)
            t = rand((2, 7), 100 + i, lo=-3, hi=3)
            assert distillation_loss(s, t, 2.0, 0.0).item() >= -1e-6

    def test_grad_check_tau2_alpha_half(self):
        tg.enable_autograd()
        try:
            teacher = rand((3, 5), 11)
            targets = Tensor([1, 0, 3], dtype=DType.INT64)

            def f(v):
                return distillation_loss(v.reshape((3, 5)), teacher, 2.0,
                                         0.5, targets)

            r = tg.grad_check(f, rand((15,), 12, requires_grad=True),
                              epsilon=1e-2)
            assert r.passed, r

            student = rand((3, 5), 13)

            def g(v):
                return distillation_loss(student, v.reshape((3, 5)), 2.0,
                                         0.5, targets)

            # the teacher-side gradient components are tiny, so the float32
            # finite-difference floor is higher
            r = tg.grad_check(g, rand((15,), 14, requires_grad=True),
                              epsilon=1e-2, tolerance=1e-3)
            assert r.passed, r
        finally:
            tg.disable_autograd()

    def test_domain(self):
        s, t = rand((2, 3), 1), rand((2, 3), 2)
        with pytest.raises(DomainError):
            distillation_loss(s, t, 0.0, 0.5, Tensor([0, 1],
                                                     dtype=DType.INT64))
        with pytest.raises(DomainError):
            distillation_loss(s, t, 1.0, 2.0, Tensor([0, 1],
                                                     dtype=DType.INT64))
        with pytest.raises(DomainError):
            distillation_loss(s, t, 1.0, 0.5, None)


class TestBenchmark:
    def test_sample_count_and_ci_shape(self):
        result = benchmark(lambda: None, warmup_count=2, repeat_count=8,
                           confidence_level=0.95)
        assert len(result.samples_ns) == 8
        assert result.ci_lo_ns <= result.mean_ns <= result.ci_hi_ns

    def test_constant_samples_zero_width_ci(self):
        result = summarize([10_000_000] * 4, 0.95)
        assert result.std_ns == 0.0
        assert result.ci_lo_ns == result.ci_hi_ns == 10_000_000

    def test_known_ci_arithmetic(self):
        samples = [10, 12, 11, 13, 9]
        result = summarize(samples, 0.95)
        mean = np.mean(samples)
        std = np.std(samples, ddof=1)
        half = t_critical(0.95, 4) * std / math.sqrt(5)
        assert result.mean_ns == pytest.approx(mean)
        assert result.std_ns == pytest.approx(std)
        assert result.ci_hi_ns - result.mean_ns == pytest.approx(half)

    def test_repeat_count_validation(self):
        with pytest.raises(DomainError):
            benchmark(lambda: None, repeat_count=1)

    def test_json_fields(self):
        import json
        obj = json.loads(summarize([5, 6, 7], 0.9).to_json())
        assert {"samples_ns", "mean_ns", "std_ns", "ci", "warmup", "repeats",
                "seed"} <= obj.keys()
        assert {"level", "lo_ns", "hi_ns"} <= obj["ci"].keys()

    def test_timer_resolution_positive(self):
        assert timer_resolution_ns() >= 1


class TestTDistribution:
    def test_symmetry(self):
        assert t_cdf(0.0, 7) == 0.5
        assert t_cdf(-2.0, 7) == pytest.approx(1.0 - t_cdf(2.0, 7), abs=1e-12)

    def test_reference_criticals(self):
        # classic table values
        assert t_critical(0.95, 9) == pytest.approx(2.2622, abs=2e-4)
        assert t_critical(0.99, 9) == pytest.approx(3.2498, abs=2e-4)
        assert t_critical(0.95, 120) == pytest.approx(1.9799, abs=2e-4)


class TestCompare:
    def test_identical_results_not_significant(self):
        a = summarize([100, 110, 105, 95], 0.95)
        assert compare(a, a).speedup == 1.0
        assert not compare(a, a).significant

    def test_level_mismatch(self):
        a = summarize([100, 110], 0.95)
        b = summarize([100, 110], 0.99)
        with pytest.raises(LevelMismatch):
            compare(a, b)

    def test_small_gap_high_variance_not_significant(self):
        rng = Rng(5)
        base = [int(1e6 + rng.uniform(-2e5, 2e5)) for _ in range(6)]
        a = summarize(base, 0.95)
        b = summarize([int(s * 1.01) for s in base], 0.95)
        result = compare(a, b)
        assert not result.significant

    def test_large_gap_significant(self):
        a = summarize([1000, 1010, 990, 1005], 0.95)
        b = summarize([100, 101, 99, 100], 0.95)
        result = compare(a, b)
        assert result.significant
        assert result.speedup == pytest.approx(10.0, rel=0.05)

    def test_welch_t_statistic_known_value(self):
        a = summarize([10, 12, 14], 0.95)  # mean 12, var 4
        b = summarize([9, 11, 13], 0.95)   # mean 11, var 4
        result = compare(a, b)
        expected_t = (12 - 11) / math.sqrt(4 / 3 + 4 / 3)
        assert result.t_statistic == pytest.approx(expected_t, rel=1e-9)


class TestCounters:
    def test_kv_and_score_counters_reset(self):
        tracker.reset_op_counters()
        snap = tracker.snapshot()
        assert snap.kv_positions_computed == 0
        assert snap.attention_score_bytes == 0
        assert snap.macs == 0
