"""Parameter update rules with exact optimizer-state byte accounting.

The four kinds differ in how many auxiliary buffers they keep per parameter
(and therefore how much memory a training run really costs):

    sgd       0 buffers   update bytes = grads only        (1x params)
    momentum  1 (velocity)                                 (2x params)
    adam      2 (first + second moment)                    (3x params)
    adamw     2, plus decoupled weight decay               (3x params)
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, DTypeError, EmptyParamList, MissingGrad
from .tensor import DType, Tensor, zeros

KINDS = ("sgd", "momentum", "adam", "adamw")


class Optimizer:
    kind = "base"
    buffers_per_param = 0

    def __init__(self, params: list[Tensor], lr: float):
        params = list(params)
        if not params:
            raise EmptyParamList("optimizer needs at least one parameter")
        for p in params:
            if p.dtype is not DType.FLOAT32:
                raise DTypeError("optimizer parameters must be Float32")
        self.params = params
        self.lr = lr
        self.step_count = 0
        self.buffers: list[list[Tensor]] = [[] for _ in params]

    def _grads(self) -> list[np.ndarray]:
        grads = []
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise MissingGrad(f"parameter {i} has no gradient")
            grads.append(p.grad.data)
        return grads

    def step(self) -> None:
        grads = self._grads()
        self.step_count += 1
        self._apply(grads)

    def _apply(self, grads: list[np.ndarray]) -> None:
        raise NotImplementedError

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def state_bytes(self) -> dict[str, int]:
        """Byte decomposition: parameters, live gradients, auxiliary state,
        and the optimizer-related total (grads + state)."""
        param_bytes = sum(p.memory_footprint() for p in self.params)
        grad_bytes = sum(p.grad.memory_footprint() for p in self.params
                         if p.grad is not None)
        state = sum(b.memory_footprint() for bufs in self.buffers for b in bufs)
        return {
            "param_bytes": param_bytes,
            "grad_bytes": grad_bytes,
            "state_bytes": state,
            "optimizer_related_total": grad_bytes + state,
        }


class SGD(Optimizer):
    kind = "sgd"
    buffers_per_param = 0

    def __init__(self, params, lr: float = 0.01):
        super().__init__(params, lr)

    def _apply(self, grads):
        for p, g in zip(self.params, grads):
            p.data -= self.lr * g


class Momentum(Optimizer):
    kind = "momentum"
    buffers_per_param = 1

    def __init__(self, params, lr: float = 0.01, momentum: float = 0.9):
        super().__init__(params, lr)
        self.momentum = momentum
        self.buffers = [[zeros(p.shape)] for p in self.params]

    def _apply(self, grads):
        for p, g, (vel,) in zip(self.params, grads, self.buffers):
            vel.data *= self.momentum
            vel.data += g
            p.data -= self.lr * vel.data


class Adam(Optimizer):
    kind = "adam"
    buffers_per_param = 2

    def __init__(self, params, lr: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8,
                 bias_correction: bool = True):
        super().__init__(params, lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.bias_correction = bias_correction
        self.buffers = [[zeros(p.shape), zeros(p.shape)] for p in self.params]

    def _adam_delta(self, g: np.ndarray, m: Tensor, v: Tensor) -> np.ndarray:
        b1, b2 = self.beta1, self.beta2
        m.data *= b1
        m.data += (1.0 - b1) * g
        v.data *= b2
        v.data += (1.0 - b2) * g * g
        if self.bias_correction:
            t = self.step_count
            mh = m.data / (1.0 - b1 ** t)
            vh = v.data / (1.0 - b2 ** t)
        else:
            mh, vh = m.data, v.data
        return self.lr * mh / (np.sqrt(vh) + self.eps)

    def _apply(self, grads):
        for p, g, (m, v) in zip(self.params, grads, self.buffers):
            p.data -= self._adam_delta(g, m, v)


class AdamW(Adam):
    kind = "adamw"

    def __init__(self, params, lr: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 0.01, bias_correction: bool = True):
        super().__init__(params, lr, beta1, beta2, eps, bias_correction)
        self.weight_decay = weight_decay

    def _apply(self, grads):
        for p, g, (m, v) in zip(self.params, grads, self.buffers):
            # decoupled decay first, then the adaptive delta
            p.data -= self.lr * self.weight_decay * p.data
            p.data -= self._adam_delta(g, m, v)


def optimizer_new(kind: str, params: list[Tensor], **hyper) -> Optimizer:
    if kind == "sgd":
        return SGD(params, **hyper)
    if kind == "momentum":
        return Momentum(params, **hyper)
    if kind == "adam":
        return Adam(params, **hyper)
    if kind == "adamw":
        return AdamW(params, **hyper)
    raise DomainError(f"unknown optimizer kind {kind!r}")


def optimizer_state_bytes(opt: Optimizer) -> dict[str, int]:
    return opt.state_bytes()


def training_memory_estimate(param_count: int, kind: str = "adam") -> dict:
    """Bytes to hold Float32 weights + grads + optimizer state at scale.

    Reported in both decimal (TB = 1e12) and binary (TiB = 2^40) units; a
    '2.8 TB' decimal figure is the same memory as ~2.5 TiB binary, which is
    why large-model memory quotes differ depending on the unit convention.
    """
    per_param = {"sgd": 2, "momentum": 3, "adam": 4, "adamw": 4}
    if kind not in per_param:
        raise DomainError(f"unknown optimizer kind {kind!r}")
    total = param_count * 4 * per_param[kind]
    return {
        "bytes": total,
        "terabytes_decimal": total / 1e12,
        "tebibytes_binary": total / 2**40,
        "unit_note": "decimal TB = 1e12 bytes; binary TiB = 2^40 bytes",
    }
