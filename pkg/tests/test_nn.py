import math

import numpy as np
import pytest

import tallygrad as tg
from tallygrad.errors import AxisOutOfRange, ShapeMismatch, TargetOutOfRange
from tallygrad.nn import (
    LinearLayer,
    activation,
    cross_entropy_loss,
    mse_loss,
    xavier_init,
)
from tallygrad.rng import Rng
from tallygrad.tensor import DType, Tensor


@pytest.fixture(autouse=True)
def grad_mode():
    tg.enable_autograd()
    yield
    tg.disable_autograd()


def rand(shape, seed=0, requires_grad=True, lo=-1.0, hi=1.0):
    n = int(np.prod(shape)) if shape else 1
    vals = Rng(seed).uniform_array(n, lo, hi).astype(np.float32)
    return Tensor(vals, shape=shape, requires_grad=requires_grad)


class TestActivations:
    def test_relu(self):
        out = activation("relu", Tensor([-1.0, 0.0, 2.0]))
        assert out.tolist() == [0.0, 0.0, 2.0]

    def test_sigmoid_tanh_zero(self):
        assert activation("sigmoid", Tensor([0.0])).item() == 0.5
        assert activation("tanh", Tensor([0.0])).item() == 0.0

    def test_softmax_overflow_guard(self):
        out = activation("softmax", Tensor([1000.0, 1000.0]), axis=0)
        assert np.allclose(out.nd, [0.5, 0.5])
        assert np.isfinite(out.nd).all()

    def test_softmax_rows_sum_to_one_huge_inputs(self):
        rng = Rng(3)
        for mag in (1.0, 1e3, 1e6):
            x = Tensor((rng.uniform_array(40, -mag, mag)).astype(np.float32),
                       shape=(8, 5))
            y = activation("softmax", x, axis=1)
            assert np.all(y.nd >= 0)
            assert np.allclose(y.nd.sum(axis=1), 1.0, atol=1e-6)

    def test_softmax_needs_axis(self):
        with pytest.raises(AxisOutOfRange):
            activation("softmax", rand((2, 3)))

    def test_gelu_reference_values(self):
        # tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi)(x + 0.044715 x^3)))
        x = np.array([-2.0, -0.5, 0.0, 0.5, 2.0], dtype=np.float32)
        u = math.sqrt(2.0 / math.pi) * (x + 0.044715 * x ** 3)
        expected = 0.5 * x * (1.0 + np.tanh(u))
        out = activation("gelu", Tensor(x))
        assert np.allclose(out.nd, expected, atol=1e-6)

    def test_all_kinds_grad_check(self):
        # sign weights keep |f| near zero so float32 rounding of the output
        # does not swamp the small sigmoid/relu derivatives
        signs = Tensor(np.where(Rng(0).uniform_array(12) < 0.5, -1.0,
                                1.0).astype(np.float32))
        for kind, seed in (("relu", 1), ("sigmoid", 2), ("tanh", 3),
                           ("gelu", 4)):
            # keep relu inputs away from the kink at 0
            x = rand((12,), seed, lo=0.1, hi=1.5) if kind == "relu" \
                else rand((12,), seed)
            r = tg.grad_check(
                lambda v: (activation(kind, v) * signs).sum(), x,
                epsilon=1e-2)
            assert r.passed, (kind, r)
        r = tg.grad_check(
            lambda v: (activation("softmax", v.reshape((3, 4)), axis=1)
                       * rand((3, 4), 50, requires_grad=False)).sum(),
            rand((12,), 5))
        assert r.passed, r


class TestXavier:
    def test_bound_for_784_10(self):
        t = xavier_init(784, 10, Rng(0))
        b = math.sqrt(6.0 / 794.0)
        assert t.shape == (10, 784)
        assert float(np.abs(t.nd).max()) <= b
        assert b == pytest.approx(0.0869, abs=1e-4)

    def test_square_bound_one(self):
        assert math.sqrt(6.0 / 6.0) == 1.0
        t = xavier_init(3, 3, Rng(1))
        assert float(np.abs(t.nd).max()) <= 1.0

    def test_same_seed_bit_identical(self):
        a = xavier_init(32, 16, Rng(77))
        b = xavier_init(32, 16, Rng(77))
        assert np.array_equal(a.nd, b.nd)


class TestLinear:
    def test_parameter_count(self):
        layer = LinearLayer(784, 10, Rng(0))
        assert layer.parameter_count == 7850
        rng = Rng(9)
        for _ in range(10):
            i, o = rng.randint(100) + 1, rng.randint(100) + 1
            assert LinearLayer(i, o, rng).parameter_count == i * o + o

    def test_zero_weights_zero_output(self):
        layer = LinearLayer(4, 3, Rng(0))
        layer.weight.data[...] = 0.0
        out = layer.forward(rand((5, 4), 3))
        assert np.all(out.nd == 0.0)

    def test_batch_shape(self):
        layer = LinearLayer(784, 10, Rng(0))
        assert layer.forward(rand((32, 784), 1)).shape == (32, 10)

    def test_shape_mismatch(self):
        layer = LinearLayer(4, 3, Rng(0))
        with pytest.raises(ShapeMismatch):
            layer.forward(rand((5, 5), 1))

    def test_grad_flows_to_everything(self):
        layer = LinearLayer(4, 3, Rng(0))
        x = rand((2, 4), 1)
        loss = layer.forward(x).sum()
        tg.backward(loss)
        assert x.grad is not None
        assert layer.weight.grad is not None
        assert layer.bias.grad is not None
        assert np.allclose(layer.bias.grad.nd, 2.0)  # batch of 2, sum loss


class TestCrossEntropy:
    def test_uniform_logits(self):
        logits = tg.zeros((4, 10))
        logits.requires_grad = True
        targets = Tensor([0, 3, 5, 9], dtype=DType.INT64)
        loss = cross_entropy_loss(logits, targets)
        assert loss.item() == pytest.approx(math.log(10.0), abs=1e-6)

    def test_confident_correct_approaches_zero(self):
        logits_np = np.zeros((3, 10), dtype=np.float32)
        for i, t in enumerate((1, 4, 7)):
            logits_np[i, t] = 1e4
        loss = cross_entropy_loss(Tensor(logits_np),
                                  Tensor([1, 4, 7], dtype=DType.INT64))
        assert loss.item() <= 1e-4

    def test_huge_logit_no_overflow(self):
        loss = cross_entropy_loss(Tensor([[1000.0, 0.0]]),
                                  Tensor([1], dtype=DType.INT64))
        assert math.isfinite(loss.item())
        assert loss.item() == pytest.approx(1000.0, rel=1e-6)

    def test_shift_invariance(self):
        rng = Rng(5)
        logits = rand((6, 8), 5)
        targets = Tensor([rng.randint(8) for _ in range(6)],
                         dtype=DType.INT64)
        base = cross_entropy_loss(logits, targets).item()
        shifted = Tensor(logits.nd + 13.5)
        again = cross_entropy_loss(shifted, targets).item()
        assert again == pytest.approx(base, abs=1e-5)

    def test_target_out_of_range(self):
        with pytest.raises(TargetOutOfRange):
            cross_entropy_loss(rand((2, 4), 1),
                               Tensor([0, 4], dtype=DType.INT64))

    def test_grad_check(self):
        targets = Tensor([2, 0, 1], dtype=DType.INT64)
        r = tg.grad_check(
            lambda v: cross_entropy_loss(v.reshape((3, 4)), targets),
            rand((12,), 8))
        assert r.passed, r


class TestMSE:
    def test_zero_when_equal(self):
        x = rand((5,), 1, requires_grad=False)
        assert mse_loss(x, x).item() == 0.0

    def test_unit_distance(self):
        loss = mse_loss(Tensor([0.0, 0.0]), Tensor([1.0, 1.0]))
        assert loss.item() == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            mse_loss(rand((2, 2)), rand((4,), 1))

    def test_gradient_formula(self):
        pred = rand((6,), 2)
        target = rand((6,), 3, requires_grad=False)
        tg.backward(mse_loss(pred, target))
        expected = 2.0 * (pred.nd - target.nd) / 6.0
        assert np.allclose(pred.grad.nd, expected, atol=1e-7)

    def test_grad_check(self):
        target = rand((9,), 30, requires_grad=False)
        r = tg.grad_check(lambda v: mse_loss(v, target), rand((9,), 31))
        assert r.passed, r
