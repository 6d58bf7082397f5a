"""Post-training INT8 quantization: per-tensor asymmetric affine, weight-only.

dequantized value = scale * (q - zero_point).  The round-trip error bound
|x - deq(quant(x))| <= scale/2 holds whenever the calibration range straddles
zero (always true for weight tensors); a degenerate min == max range falls
back to an exact representation of the constant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidRange
from .nn import LinearLayer
from .tensor import Tensor, matmul, transpose

_SCALE_FLOOR = 1e-8
_METADATA_BYTES = 8  # scale f32 + zero_point i32


@dataclass
class QuantizedTensor:
    data: np.ndarray          # int8, flat
    scale: float
    zero_point: int
    original_shape: tuple[int, ...]

    def memory_footprint(self) -> int:
        return self.data.size * 1 + _METADATA_BYTES


def quantize(t: Tensor, calibration: Optional[tuple[float, float]] = None
             ) -> QuantizedTensor:
    """Affine map to int8: scale = (max-min)/255, zero_point anchored so the
    calibration minimum lands on -128."""
    if calibration is None:
        lo = float(t.data.min())
        hi = float(t.data.max())
    else:
        lo, hi = float(calibration[0]), float(calibration[1])
    if lo > hi:
        raise InvalidRange(f"calibration min {lo} > max {hi}")
    if hi > lo:
        scale = (hi - lo) / 255.0
        zero_point = int(np.clip(round(-128.0 - lo / scale), -128, 127))
    else:
        # constant tensor: pick a scale that represents it exactly
        scale = max(abs(lo), _SCALE_FLOOR)
        zero_point = 0
    q = np.clip(np.round(t.data.astype(np.float64) / scale) + zero_point,
                -128, 127).astype(np.int8)
    return QuantizedTensor(data=q, scale=float(scale),
                           zero_point=zero_point, original_shape=t.shape)


def dequantize(q: QuantizedTensor) -> Tensor:
    vals = (q.data.astype(np.float32) - np.float32(q.zero_point)) \
        * np.float32(q.scale)
    return Tensor._wrap(vals.reshape(q.original_shape))


@dataclass
class QuantizedLinear:
    weight: QuantizedTensor
    bias: QuantizedTensor
    in_features: int
    out_features: int

    def memory_footprint(self) -> int:
        return self.weight.memory_footprint() + self.bias.memory_footprint()


def quantize_linear(layer: LinearLayer) -> QuantizedLinear:
    return QuantizedLinear(
        weight=quantize(layer.weight),
        bias=quantize(layer.bias),
        in_features=layer.in_features,
        out_features=layer.out_features,
    )


def quantized_linear_eval(layer_q: QuantizedLinear, x: Tensor) -> Tensor:
    """Reference weight-only path: dequantize, then the usual matmul."""
    w = dequantize(layer_q.weight)
    b = dequantize(layer_q.bias)
    return matmul(x, transpose(w, (1, 0))) + b


def compression_ratio(float_bytes: int, quant_bytes: int) -> float:
    return float_bytes / quant_bytes
