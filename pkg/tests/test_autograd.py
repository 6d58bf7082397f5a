import numpy as np
import pytest

import tallygrad as tg
from tallygrad import tracker
from tallygrad.errors import (
    BackwardFromNonScalar,
    DisconnectedGraph,
    GradModeOff,
)
from tallygrad.nn import LinearLayer
from tallygrad.rng import Rng
from tallygrad.tensor import Tensor


@pytest.fixture(autouse=True)
def grad_mode():
    tg.enable_autograd()
    yield
    tg.disable_autograd()


def rand(shape, seed=0, requires_grad=True, lo=-1.0, hi=1.0):
    n = int(np.prod(shape)) if shape else 1
    vals = Rng(seed).uniform_array(n, lo, hi).astype(np.float32)
    return Tensor(vals, shape=shape, requires_grad=requires_grad)


class TestGradMode:
    def test_requires_grad_needs_mode(self):
        tg.disable_autograd()
        with pytest.raises(GradModeOff):
            Tensor([1.0], requires_grad=True)

    def test_enable_idempotent(self):
        tg.enable_autograd()
        tg.enable_autograd()
        x = Tensor([1.0], requires_grad=True)
        assert x.requires_grad

    def test_no_nodes_while_disabled(self):
        tg.disable_autograd()
        before = tracker.snapshot().tape_nodes
        a, b = Tensor([1.0, 2.0]), Tensor([3.0, 4.0])
        ((a * b) + a).sum()
        assert tracker.snapshot().tape_nodes == before

    def test_earlier_tensors_stay_usable(self):
        tg.disable_autograd()
        a = Tensor([2.0])
        tg.enable_autograd()
        x = Tensor([3.0], requires_grad=True)
        y = (x * a).sum()
        tg.backward(y)
        assert x.grad.tolist() == [2.0]


class TestBackward:
    def test_square_anchor(self):
        x = Tensor([3.0], requires_grad=True)
        y = x * x
        tg.backward(y)
        assert x.grad.tolist() == [6.0]

    def test_sum_gives_ones(self):
        x = rand((3, 4), 5)
        tg.backward(x.sum())
        assert np.array_equal(x.grad.nd, np.ones((3, 4), dtype=np.float32))

    def test_accumulation_two_rounds(self):
        x = rand((6,), 9)
        for _ in range(2):
            tg.backward(x.sum())
        assert np.array_equal(x.grad.nd, 2 * np.ones(6, dtype=np.float32))

    def test_double_backward_same_scalar_doubles(self):
        x = rand((4,), 3)
        y = (x * x).sum()
        tg.backward(y)
        first = x.grad.nd.copy()
        tg.backward(y)
        assert np.array_equal(x.grad.nd, 2 * first)

    def test_disconnected(self):
        tg.disable_autograd()
        a, b = Tensor([1.0]), Tensor([2.0])
        y = a * b
        tg.enable_autograd()
        with pytest.raises(DisconnectedGraph):
            tg.backward(y)

    def test_non_scalar_rejected(self):
        x = rand((3,), 2)
        with pytest.raises(BackwardFromNonScalar):
            tg.backward(x * x)

    def test_broadcast_backward_law(self):
        a = rand((3, 1), 10)
        b = rand((1, 4), 11)
        tg.backward((a + b).sum())
        assert a.grad.shape == (3, 1)
        assert b.grad.shape == (1, 4)
        assert np.all(a.grad.nd == 4.0)
        assert np.all(b.grad.nd == 3.0)

    def test_shared_input_used_twice(self):
        x = Tensor([2.0], requires_grad=True)
        y = ((x * x) * x).sum()  # x^3, dy/dx = 3x^2 = 12
        tg.backward(y)
        assert np.allclose(x.grad.nd, [12.0])


class TestZeroGrad:
    def test_clears_to_unset(self):
        x = rand((5,), 1)
        tg.backward(x.sum())
        assert x.grad is not None
        tg.zero_grad([x])
        assert x.grad is None

    def test_noop_on_fresh(self):
        x = rand((5,), 1)
        tg.zero_grad([x])
        assert x.grad is None

    def test_grad_bytes_released(self):
        x = rand((1000,), 1)
        tg.backward(x.sum())
        live_with_grad = tracker.live_bytes()
        tg.zero_grad([x])
        assert tracker.live_bytes() == live_with_grad - 4000


class TestCountGraph:
    def test_single_op(self):
        x = Tensor([3.0], requires_grad=True)
        y = x * x
        assert tg.count_graph(y).node_count == 1

    def test_chain_of_k(self):
        x = Tensor([1.5], requires_grad=True)
        y = x
        for k in range(1, 8):
            y = y * x
            # k muls so far
        assert tg.count_graph(y).node_count == 7

    def test_linear_saved_bytes(self):
        layer = LinearLayer(784, 10, Rng(0))
        x = rand((32, 784), 5, requires_grad=False)
        out = layer.forward(x)
        stats = tg.count_graph(out)
        # matmul saves its two operands: the (32,784) input and the
        # transposed (784,10) weight
        assert stats.saved_bytes == 32 * 784 * 4 + 784 * 10 * 4
        assert stats.saved_bytes >= 100_352

    def test_disconnected(self):
        with pytest.raises(DisconnectedGraph):
            tg.count_graph(Tensor([1.0]))


class TestGradCheckCore:
    def test_sum_of_squares(self):
        report = tg.grad_check(lambda v: (v * v).sum(), rand((10,), 42),
                               epsilon=1e-3, tolerance=1e-4)
        assert report.passed, report

    def test_linear_function_is_near_exact(self):
        # no truncation term for a linear map, so a wide step leaves only
        # float32 representation noise
        report = tg.grad_check(lambda v: v.sum(), rand((8,), 7), epsilon=1e-2)
        assert report.max_rel_error <= 1e-5

    def test_max_at_tie_documented_nondifferentiable(self):
        # constant input: max has subgradients; the analytic rule picks the
        # first element, central differences see half the slope at ties
        x = Tensor(np.zeros(4, dtype=np.float32), requires_grad=True)
        report = tg.grad_check(lambda v: v.max(), x)
        assert not report.passed

    def test_core_ops_batch(self):
        cases = [
            (lambda v: (v * v * v).sum(), 1),
            (lambda v: (v * 2.5 + 1.0).sum(), 2),
            (lambda v: (v / (v * v + 2.0)).sum(), 3),
            (lambda v: (v.reshape((2, 5)).transpose((1, 0)) * 0.5).sum(), 4),
            (lambda v: v.reshape((2, 5)).sum(axis=1).max(), 5),
            (lambda v: v.mean(), 6),
            (lambda v: (v.reshape((2, 5)) @ rand((5, 3), 99,
                                                 requires_grad=False)).sum(), 7),
        ]
        for f, seed in cases:
            report = tg.grad_check(f, rand((10,), seed))
            assert report.passed, (seed, report)


class TestDotExport:
    def test_square_graph(self):
        x = Tensor([3.0], requires_grad=True)
        y = x * x
        dot = tg.to_dot(y)
        assert dot.startswith("digraph")
        assert "mul#" in dot
        assert dot.count("->") == 2  # both operand slots reference the leaf

    def test_chain_edges(self):
        x = Tensor([2.0], requires_grad=True)
        z = (x * x).sum()
        dot = tg.to_dot(z)
        assert "mul#" in dot and "sum#" in dot
