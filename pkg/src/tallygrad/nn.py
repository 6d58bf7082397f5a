"""Activations, the Linear layer with Xavier init, and stable losses."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from . import _graph
from .errors import AxisOutOfRange, DTypeError, ShapeMismatch, TargetOutOfRange
from .rng import Rng
from .tensor import DType, Tensor, matmul, transpose, zeros

ACTIVATION_KINDS = ("relu", "sigmoid", "tanh", "gelu", "softmax")

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def activation(kind: str, x: Tensor, axis: Optional[int] = None) -> Tensor:
    """Elementwise nonlinearity; softmax normalizes along the given axis
    after subtracting the per-axis max (the exp-overflow guard)."""
    if x.dtype is not DType.FLOAT32:
        raise DTypeError(f"activation needs Float32 input, got {x.dtype.value}")
    xn = x.nd
    if kind == "relu":
        out = np.maximum(xn, 0.0)
    elif kind == "sigmoid":
        out = _stable_sigmoid(xn)
    elif kind == "tanh":
        out = np.tanh(xn)
    elif kind == "gelu":
        u = _GELU_C * (xn + _GELU_A * xn ** 3)
        out = 0.5 * xn * (1.0 + np.tanh(u))
    elif kind == "softmax":
        if axis is None or not -x.rank <= axis < x.rank:
            raise AxisOutOfRange(f"softmax needs a valid axis, got {axis}")
        axis = axis % x.rank
        out = _softmax(xn, axis)
    else:
        raise ValueError(f"unknown activation {kind!r}")

    result = Tensor._wrap(out.astype(np.float32, copy=False))
    if _graph.should_record((x,)):
        _record_activation(kind, x, axis, result)
    return result


def _record_activation(kind: str, x: Tensor, axis: Optional[int],
                       result: Tensor) -> None:
    if kind == "relu":
        mask = Tensor._wrap((x.nd > 0).astype(np.float32))
        saved = (mask,)

        def backward(g):
            return (g * mask.nd,)
    elif kind == "sigmoid":
        saved = (result,)

        def backward(g):
            y = result.nd
            return (g * y * (1.0 - y),)
    elif kind == "tanh":
        saved = (result,)

        def backward(g):
            y = result.nd
            return (g * (1.0 - y * y),)
    elif kind == "gelu":
        saved = (x,)

        def backward(g):
            xn = x.nd
            u = _GELU_C * (xn + _GELU_A * xn ** 3)
            t = np.tanh(u)
            du = _GELU_C * (1.0 + 3.0 * _GELU_A * xn * xn)
            dy = 0.5 * (1.0 + t) + 0.5 * xn * (1.0 - t * t) * du
            return (g * dy,)
    else:  # softmax
        saved = (result,)

        def backward(g):
            y = result.nd
            return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    result.requires_grad = True
    result.node = _graph.Node(kind, (x,), saved, backward)


def relu(x: Tensor) -> Tensor:
    return activation("relu", x)


def sigmoid(x: Tensor) -> Tensor:
    return activation("sigmoid", x)


def tanh(x: Tensor) -> Tensor:
    return activation("tanh", x)


def gelu(x: Tensor) -> Tensor:
    return activation("gelu", x)


def softmax(x: Tensor, axis: int) -> Tensor:
    return activation("softmax", x, axis)


def xavier_init(fan_in: int, fan_out: int, rng: Rng) -> Tensor:
    """Glorot-uniform weights, bound sqrt(6 / (fan_in + fan_out))."""
    if fan_in <= 0 or fan_out <= 0:
        raise ValueError("fan_in and fan_out must be positive")
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    vals = rng.uniform_array(fan_out * fan_in, -bound, bound).astype(np.float32)
    return Tensor(vals, shape=(fan_out, fan_in))


class LinearLayer:
    """y = x @ W^T + b with W (out_features, in_features) Xavier-initialized
    and b zero.  Parameters require grad automatically when autograd is on."""

    def __init__(self, in_features: int, out_features: int, rng: Rng,
                 requires_grad: Optional[bool] = None):
        if requires_grad is None:
            requires_grad = _graph.grad_mode_enabled()
        elif requires_grad and not _graph.grad_mode_enabled():
            from .errors import GradModeOff
            raise GradModeOff("trainable layers need autograd enabled")
        self.in_features = in_features
        self.out_features = out_features
        self.weight = xavier_init(in_features, out_features, rng)
        self.weight.requires_grad = requires_grad
        self.bias = zeros((out_features,))
        self.bias.requires_grad = requires_grad

    @property
    def parameter_count(self) -> int:
        return self.out_features * self.in_features + self.out_features

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def forward(self, x: Tensor) -> Tensor:
        return linear_forward(self, x)

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)


def linear_forward(layer: LinearLayer, x: Tensor) -> Tensor:
    if x.shape[-1] != layer.in_features:
        raise ShapeMismatch(
            f"Shape mismatch: {x.shape} @ {layer.weight.shape} transposed"
        )
    return matmul(x, transpose(layer.weight, (1, 0))) + layer.bias


def cross_entropy_loss(logits: Tensor, targets: Tensor) -> Tensor:
    """Mean over the batch of logsumexp(logits) - logits[target], computed
    with the max-subtraction guard so huge logits never overflow."""
    if logits.rank != 2:
        raise ShapeMismatch(f"logits must be (batch, classes), got {logits.shape}")
    if targets.dtype is not DType.INT64 or targets.rank != 1:
        raise DTypeError("targets must be a rank-1 Int64 tensor")
    batch, classes = logits.shape
    if targets.shape[0] != batch:
        raise ShapeMismatch(
            f"targets length {targets.shape[0]} != batch {batch}"
        )
    ids = targets.data
    if ids.size and (ids.min() < 0 or ids.max() >= classes):
        raise TargetOutOfRange(f"targets must lie in [0, {classes})")

    ln = logits.nd
    m = ln.max(axis=1, keepdims=True)
    z = ln - m
    lse = m[:, 0] + np.log(np.exp(z).sum(axis=1))
    losses = lse - ln[np.arange(batch), ids]
    result = Tensor._wrap(np.asarray(losses.mean(), dtype=np.float32))

    if _graph.should_record((logits,)):
        probs = Tensor._wrap(_softmax(ln, 1))

        def backward(g):
            d = probs.nd.copy()
            d[np.arange(batch), ids] -= 1.0
            return (d * (g.reshape(())[()] / batch), None)

        result.requires_grad = True
        result.node = _graph.Node("cross_entropy", (logits, targets), (probs,),
                                  backward)
    return result


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean of squared differences."""
    if pred.shape != target.shape:
        raise ShapeMismatch(f"mse shapes differ: {pred.shape} vs {target.shape}")
    diff = pred.nd - target.nd
    result = Tensor._wrap(np.asarray(np.mean(diff * diff), dtype=np.float32))
    if _graph.should_record((pred, target)):
        saved = (pred, target)
        n = pred.size

        def backward(g):
            scale = g.reshape(())[()] * (2.0 / n)
            d = (pred.nd - target.nd) * scale
            return (d, -d)

        result.requires_grad = True
        result.node = _graph.Node("mse", (pred, target), saved, backward)
    return result
