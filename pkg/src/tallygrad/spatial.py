"""2-D convolution two ways, pooling, and parameter/MAC accounting.

conv2d_naive is the transparent reference: seven nested Python loops, one
multiply-accumulate at the innermost level.  conv2d_fast trades memory for
speed by unrolling receptive fields into matrix rows (im2col) and running a
single matmul.  Both paths are differentiable and must agree numerically.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from . import _graph, tracker
from .errors import DomainError, KernelTooLarge, ShapeMismatch, WindowTooLarge
from .rng import Rng
from .tensor import DType, Tensor, matmul, reshape, transpose, zeros


class Conv2dLayer:
    """weight (C_out, C_in, K_h, K_w), bias (C_out), plus stride/padding."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: Rng, stride: int = 1, padding: int = 0,
                 requires_grad: Optional[bool] = None):
        if stride < 1 or padding < 0:
            raise DomainError("stride must be >= 1 and padding >= 0")
        if requires_grad is None:
            requires_grad = _graph.grad_mode_enabled()
        k = kernel_size
        fan_in = in_channels * k * k
        fan_out = out_channels * k * k
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        vals = rng.uniform_array(out_channels * in_channels * k * k,
                                 -bound, bound).astype(np.float32)
        self.weight = Tensor(vals, shape=(out_channels, in_channels, k, k))
        self.weight.requires_grad = requires_grad
        self.bias = zeros((out_channels,))
        self.bias.requires_grad = requires_grad
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = k
        self.stride = stride
        self.padding = padding

    @property
    def parameter_count(self) -> int:
        c_out, c_in, kh, kw = self.weight.shape
        return c_out * c_in * kh * kw + c_out

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


def _conv_geometry(input_shape, layer) -> tuple[int, int]:
    b, c_in, h, w = input_shape
    c_out, c_in_w, k_h, k_w = layer.weight.shape
    if c_in != c_in_w:
        raise ShapeMismatch(
            f"input channels {c_in} != kernel channels {c_in_w}"
        )
    s, p = layer.stride, layer.padding
    if h + 2 * p < k_h or w + 2 * p < k_w:
        raise KernelTooLarge(
            f"kernel ({k_h},{k_w}) larger than padded input ({h + 2 * p},{w + 2 * p})"
        )
    h_out = (h + 2 * p - k_h) // s + 1
    w_out = (w + 2 * p - k_w) // s + 1
    return h_out, w_out


def _padded(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def conv2d_naive(input: Tensor, layer: Conv2dLayer) -> Tensor:
    """Direct seven-loop accumulation (batch, out-channel, output row/col,
    in-channel, kernel row/col); cross-correlation, bias per out-channel."""
    h_out, w_out = _conv_geometry(input.shape, layer)
    b_n, c_in, _, _ = input.shape
    c_out, _, k_h, k_w = layer.weight.shape
    s = layer.stride

    xp = _padded(input.nd, layer.padding)
    x_list = xp.tolist()          # python lists: the loops below stay honest
    w_list = layer.weight.nd.tolist()
    bias = layer.bias.data.tolist()
    out = np.zeros((b_n, c_out, h_out, w_out), dtype=np.float32)

    for b in range(b_n):
        xb = x_list[b]
        for co in range(c_out):
            wco = w_list[co]
            acc_plane = out[b, co]
            for ho in range(h_out):
                for wo in range(w_out):
                    acc = 0.0
                    for ci in range(c_in):
                        xc = xb[ci]
                        wci = wco[ci]
                        for kh in range(k_h):
                            xrow = xc[ho * s + kh]
                            wrow = wci[kh]
                            base = wo * s
                            for kw in range(k_w):
                                acc += xrow[base + kw] * wrow[kw]
                    acc_plane[ho, wo] = acc + bias[co]

    tracker.add_macs(b_n * c_out * h_out * w_out * c_in * k_h * k_w)
    result = Tensor._wrap(out)
    if _graph.should_record((input, layer.weight, layer.bias)):
        _record_conv(input, layer, result, h_out, w_out)
    return result


def conv2d_naive_mac_count(input: Tensor, layer: Conv2dLayer) -> int:
    """Brute-force audit: rerun the seven loops counting every multiply."""
    h_out, w_out = _conv_geometry(input.shape, layer)
    b_n, c_in, _, _ = input.shape
    c_out, _, k_h, k_w = layer.weight.shape
    s = layer.stride
    x_list = _padded(input.nd, layer.padding).tolist()
    count = 0
    for b in range(b_n):
        for co in range(c_out):
            for ho in range(h_out):
                for wo in range(w_out):
                    for ci in range(c_in):
                        for kh in range(k_h):
                            for kw in range(k_w):
                                count += 1
                                _ = x_list[b][ci][ho * s + kh][wo * s + kw]
    return count


def _record_conv(input: Tensor, layer: Conv2dLayer, result: Tensor,
                 h_out: int, w_out: int) -> None:
    weight, bias = layer.weight, layer.bias
    s, p = layer.stride, layer.padding
    _, _, k_h, k_w = weight.shape
    in_shape = input.shape

    def backward(g):
        xp = _padded(input.nd, p)
        wn = weight.nd
        dw = np.zeros(weight.shape, dtype=np.float32)
        dxp = np.zeros(xp.shape, dtype=np.float32)
        for kh in range(k_h):
            for kw in range(k_w):
                patch = xp[:, :, kh:kh + s * h_out:s, kw:kw + s * w_out:s]
                dw[:, :, kh, kw] = np.einsum("bohw,bihw->oi", g, patch)
                dxp[:, :, kh:kh + s * h_out:s, kw:kw + s * w_out:s] += \
                    np.einsum("bohw,oi->bihw", g, wn[:, :, kh, kw])
        h, w = in_shape[2], in_shape[3]
        dx = dxp[:, :, p:p + h, p:p + w] if p else dxp
        db = g.sum(axis=(0, 2, 3))
        return dx, dw, db

    result.requires_grad = True
    result.node = _graph.Node("conv2d", (input, weight, bias),
                              (input, weight), backward)


def im2col(input: Tensor, k_h: int, k_w: int, stride: int = 1,
           padding: int = 0) -> Tensor:
    """Unroll receptive fields into rows: (B*H_out*W_out, C_in*K_h*K_w),
    rows ordered (b, h_out, w_out), columns (c_in, k_h, k_w); padded
    positions read as zero.  The expansion is the memory-for-speed trade."""
    if stride < 1 or padding < 0:
        raise DomainError("stride must be >= 1 and padding >= 0")
    b_n, c_in, h, w = input.shape
    if h + 2 * padding < k_h or w + 2 * padding < k_w:
        raise KernelTooLarge(
            f"kernel ({k_h},{k_w}) larger than padded input "
            f"({h + 2 * padding},{w + 2 * padding})"
        )
    h_out = (h + 2 * padding - k_h) // stride + 1
    w_out = (w + 2 * padding - k_w) // stride + 1
    xp = _padded(input.nd, padding)
    col = np.empty((b_n, c_in, k_h, k_w, h_out, w_out), dtype=np.float32)
    for kh in range(k_h):
        for kw in range(k_w):
            col[:, :, kh, kw] = xp[:, :, kh:kh + stride * h_out:stride,
                                   kw:kw + stride * w_out:stride]
    out = col.transpose(0, 4, 5, 1, 2, 3).reshape(
        b_n * h_out * w_out, c_in * k_h * k_w)
    result = Tensor._wrap(out)
    if _graph.should_record((input,)):
        in_shape = input.shape

        def backward(g):
            g6 = g.reshape(b_n, h_out, w_out, c_in, k_h, k_w)
            g6 = g6.transpose(0, 3, 4, 5, 1, 2)
            dxp = np.zeros(xp.shape, dtype=np.float32)
            for kh in range(k_h):
                for kw in range(k_w):
                    dxp[:, :, kh:kh + stride * h_out:stride,
                        kw:kw + stride * w_out:stride] += g6[:, :, kh, kw]
            if padding:
                return (dxp[:, :, padding:padding + h, padding:padding + w],)
            return (dxp,)

        result.requires_grad = True
        result.node = _graph.Node("im2col", (input,), (), backward)
    return result


def conv2d_fast(input: Tensor, layer: Conv2dLayer) -> Tensor:
    """im2col + one matmul; numerically equivalent to conv2d_naive."""
    h_out, w_out = _conv_geometry(input.shape, layer)
    b_n = input.shape[0]
    c_out, c_in, k_h, k_w = layer.weight.shape
    cols = im2col(input, k_h, k_w, layer.stride, layer.padding)
    w2 = reshape(layer.weight, (c_out, c_in * k_h * k_w))
    out2 = matmul(cols, transpose(w2, (1, 0))) + layer.bias
    out4 = reshape(out2, (b_n, h_out, w_out, c_out))
    return transpose(out4, (0, 3, 1, 2))


def maxpool2d(input: Tensor, window: int, stride: Optional[int] = None) -> Tensor:
    """Per-window maximum; gradient routes to the first argmax position in
    row-major scan order within each window."""
    if window < 1:
        raise DomainError("window must be >= 1")
    stride = window if stride is None else stride
    if stride < 1:
        raise DomainError("stride must be >= 1")
    b_n, c, h, w = input.shape
    if window > h or window > w:
        raise WindowTooLarge(f"window {window} exceeds input ({h},{w})")
    h_out = (h - window) // stride + 1
    w_out = (w - window) // stride + 1
    xn = input.nd
    out = np.empty((b_n, c, h_out, w_out), dtype=np.float32)
    idx = np.empty((b_n, c, h_out, w_out), dtype=np.int64)
    for ho in range(h_out):
        for wo in range(w_out):
            win = xn[:, :, ho * stride:ho * stride + window,
                     wo * stride:wo * stride + window].reshape(b_n, c, -1)
            flat = win.argmax(axis=2)
            idx[:, :, ho, wo] = flat
            out[:, :, ho, wo] = np.take_along_axis(
                win, flat[:, :, None], axis=2)[:, :, 0]
    result = Tensor._wrap(out)
    if _graph.should_record((input,)):
        idx_t = Tensor._wrap(idx, DType.INT64)
        in_shape = input.shape

        def backward(g):
            dx = np.zeros(in_shape, dtype=np.float32)
            bb, cc = np.meshgrid(np.arange(b_n), np.arange(c), indexing="ij")
            for ho in range(h_out):
                for wo in range(w_out):
                    flat = idx_t.nd[:, :, ho, wo]
                    rr = ho * stride + flat // window
                    ww = wo * stride + flat % window
                    np.add.at(dx, (bb, cc, rr, ww), g[:, :, ho, wo])
            return (dx,)

        result.requires_grad = True
        result.node = _graph.Node("maxpool2d", (input,), (idx_t,), backward)
    return result


def conv_accounting(layer: Conv2dLayer, input_shape) -> dict[str, int]:
    """Parameters and multiply-accumulates for one forward pass."""
    h_out, w_out = _conv_geometry(input_shape, layer)
    b_n, c_in = input_shape[0], input_shape[1]
    c_out, _, k_h, k_w = layer.weight.shape
    return {
        "param_count": layer.parameter_count,
        "macs": b_n * c_out * h_out * w_out * c_in * k_h * k_w,
    }


def dense_param_count(in_features: int, out_features: int) -> int:
    return in_features * out_features + out_features


def conv_vs_dense(c_in: int, c_out: int, kernel: int, image_h: int,
                  image_w: int) -> dict[str, float]:
    """Parameter-efficiency comparison: a conv layer against a dense layer
    consuming the flattened image."""
    conv_params = c_out * c_in * kernel * kernel + c_out
    dense_params = dense_param_count(image_h * image_w * c_in, c_out)
    return {
        "conv_params": conv_params,
        "dense_params": dense_params,
        "ratio": dense_params / conv_params,
    }
