"""Dense tensors with exact byte accounting.

A Tensor is a flat, contiguous, row-major buffer plus a shape.  Float32 is
the arithmetic dtype; Int64 exists for token ids and argmax results, Int8 for
quantized payloads — neither ever participates in arithmetic or gradients.
Every construction and destruction reports its exact buffer size to the
resource tracker, which is what makes peak-memory figures meaningful.
"""

from __future__ import annotations

import enum
from typing import Optional, Sequence

import numpy as np

from . import _graph, tracker
from .errors import (
    AxisOutOfRange,
    BroadcastError,
    DTypeError,
    DTypeOverflow,
    GradModeOff,
    InvalidPermutation,
    ShapeMismatch,
)


class DType(enum.Enum):
    FLOAT32 = "float32"
    INT8 = "int8"
    INT64 = "int64"

    @property
    def element_size(self) -> int:
        return _ELEMENT_SIZE[self]

    @property
    def np_dtype(self) -> np.dtype:
        return _NP_DTYPE[self]


_ELEMENT_SIZE = {DType.FLOAT32: 4, DType.INT8: 1, DType.INT64: 8}
_NP_DTYPE = {
    DType.FLOAT32: np.dtype(np.float32),
    DType.INT8: np.dtype(np.int8),
    DType.INT64: np.dtype(np.int64),
}

Shape = tuple[int, ...]


def _shape_product(shape: Sequence[int]) -> int:
    p = 1
    for e in shape:
        p *= e
    return p


class Tensor:
    """Flat row-major value buffer; gradient fields stay unset until the
    autograd mode is switched on (see tallygrad.autograd)."""

    __slots__ = ("data", "shape", "dtype", "requires_grad", "grad", "node",
                 "_footprint", "__weakref__")

    def __init__(self, values, shape: Optional[Sequence[int]] = None,
                 dtype: DType = DType.FLOAT32, requires_grad: bool = False):
        npdt = dtype.np_dtype
        if shape is not None:
            shape = tuple(int(e) for e in shape)
            flat = np.asarray(values).reshape(-1)
            if flat.size != _shape_product(shape):
                raise ShapeMismatch(
                    f"got {flat.size} values for shape {shape} "
                    f"(needs {_shape_product(shape)})"
                )
        else:
            nd = np.asarray(values)
            shape = tuple(int(e) for e in nd.shape)
            flat = nd.reshape(-1)
        if dtype is DType.INT8:
            as_int = np.asarray(flat, dtype=np.int64)
            if as_int.size and (as_int.min() < -128 or as_int.max() > 127):
                raise DTypeOverflow("Int8 value outside [-128, 127]")
            buf = as_int.astype(np.int8)
        else:
            buf = np.array(flat, dtype=npdt)
        self._init_from(buf, shape, dtype, requires_grad)

    def _init_from(self, flat: np.ndarray, shape: Shape, dtype: DType,
                   requires_grad: bool) -> None:
        if requires_grad:
            if not _graph.grad_mode_enabled():
                raise GradModeOff(
                    "requires_grad needs autograd enabled; call enable_autograd()"
                )
            if dtype is not DType.FLOAT32:
                raise DTypeError("only Float32 tensors can require gradients")
        self.data = flat
        self.shape = shape
        self.dtype = dtype
        self.requires_grad = requires_grad
        self.grad: Optional[Tensor] = None
        self.node = None
        self._footprint = flat.size * dtype.element_size
        tracker.on_alloc(self._footprint)

    @classmethod
    def _wrap(cls, arr: np.ndarray, dtype: DType = DType.FLOAT32) -> "Tensor":
        """Adopt a freshly computed numpy array (no validation, no copy)."""
        t = cls.__new__(cls)
        arr = np.asarray(arr)
        shape = tuple(int(e) for e in arr.shape)
        flat = np.ascontiguousarray(arr, dtype=dtype.np_dtype).reshape(-1)
        t._init_from(flat, shape, dtype, False)
        return t

    def __del__(self):
        try:
            tracker.on_free(self._footprint)
        except Exception:
            pass

    # --- data access ---

    @property
    def nd(self) -> np.ndarray:
        """Shaped view of the flat buffer (internal compute handle)."""
        return self.data.reshape(self.shape)

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def rank(self) -> int:
        return len(self.shape)

    def memory_footprint(self) -> int:
        """Exact buffer bytes: product(shape) * element_size(dtype)."""
        return self._footprint

    def item(self) -> float:
        if self.size != 1:
            raise ShapeMismatch(f"item() on tensor of {self.size} elements")
        return self.data.reshape(())[()].item()

    def tolist(self):
        return self.nd.tolist()

    def __repr__(self):
        grad = ", requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype.value}{grad})"

    # --- operator sugar (delegates to the module-level ops) ---

    def __add__(self, other):
        return elementwise("add", self, _coerce(other))

    def __radd__(self, other):
        return elementwise("add", _coerce(other), self)

    def __sub__(self, other):
        return elementwise("sub", self, _coerce(other))

    def __rsub__(self, other):
        return elementwise("sub", _coerce(other), self)

    def __mul__(self, other):
        return elementwise("mul", self, _coerce(other))

    def __rmul__(self, other):
        return elementwise("mul", _coerce(other), self)

    def __truediv__(self, other):
        return elementwise("div", self, _coerce(other))

    def __rtruediv__(self, other):
        return elementwise("div", _coerce(other), self)

    def __neg__(self):
        return elementwise("mul", self, _coerce(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis: Optional[int] = None) -> "Tensor":
        return reduce("sum", self, axis)

    def mean(self, axis: Optional[int] = None) -> "Tensor":
        return reduce("mean", self, axis)

    def max(self, axis: Optional[int] = None) -> "Tensor":
        return reduce("max", self, axis)

    def reshape(self, shape: Sequence[int]) -> "Tensor":
        return reshape(self, shape)

    def transpose(self, perm: Sequence[int]) -> "Tensor":
        return transpose(self, perm)


def _coerce(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, (int, float, np.floating, np.integer)):
        return Tensor._wrap(np.asarray(float(x), dtype=np.float32))
    raise DTypeError(f"cannot use {type(x).__name__} as a tensor operand")


# --- constructors ---

def zeros(shape: Sequence[int], dtype: DType = DType.FLOAT32) -> Tensor:
    return Tensor._wrap(np.zeros(tuple(shape), dtype=dtype.np_dtype), dtype)


def ones(shape: Sequence[int], dtype: DType = DType.FLOAT32) -> Tensor:
    return Tensor._wrap(np.ones(tuple(shape), dtype=dtype.np_dtype), dtype)


def full(shape: Sequence[int], value: float) -> Tensor:
    return Tensor._wrap(np.full(tuple(shape), value, dtype=np.float32))


def tensor_new(values, shape: Sequence[int], dtype: DType = DType.FLOAT32,
               requires_grad: bool = False) -> Tensor:
    """Construct from a flat value list plus an explicit shape."""
    return Tensor(values, shape=shape, dtype=dtype, requires_grad=requires_grad)


def memory_footprint(t: Tensor) -> int:
    return t.memory_footprint()


# --- broadcasting ---

def broadcast_shapes(a: Sequence[int], b: Sequence[int]) -> Shape:
    """Right-aligned broadcast: pad the shorter shape with 1s on the left;
    per dimension the extents must match or one must be 1."""
    a, b = tuple(a), tuple(b)
    rank = max(len(a), len(b))
    pa = (1,) * (rank - len(a)) + a
    pb = (1,) * (rank - len(b)) + b
    out = []
    for dim, (ea, eb) in enumerate(zip(pa, pb)):
        if ea == eb or ea == 1 or eb == 1:
            out.append(max(ea, eb))
        else:
            raise BroadcastError(
                f"cannot broadcast {a} with {b}: dim {dim} has extents {ea} vs {eb}"
            )
    return tuple(out)


def _unbroadcast(g: np.ndarray, shape: Shape) -> np.ndarray:
    """Reduce a gradient back to the pre-broadcast shape by summation."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, e in enumerate(shape) if e == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# --- elementwise arithmetic ---

def _require_float32(*tensors: Tensor) -> None:
    for t in tensors:
        if t.dtype is not DType.FLOAT32:
            raise DTypeError(f"op needs Float32 operands, got {t.dtype.value}")


def elementwise(op: str, a: Tensor, b: Tensor) -> Tensor:
    """add / sub / mul / div under broadcasting, IEEE-754 single precision."""
    _require_float32(a, b)
    broadcast_shapes(a.shape, b.shape)
    an, bn = a.nd, b.nd
    if op == "add":
        out = an + bn
    elif op == "sub":
        out = an - bn
    elif op == "mul":
        out = an * bn
    elif op == "div":
        with np.errstate(divide="ignore", invalid="ignore"):
            out = an / bn
    else:
        raise ValueError(f"unknown elementwise op {op!r}")
    result = Tensor._wrap(out)
    if _graph.should_record((a, b)):
        _record_elementwise(op, a, b, result)
    return result


def _record_elementwise(op: str, a: Tensor, b: Tensor, result: Tensor) -> None:
    a_shape, b_shape = a.shape, b.shape
    if op == "add":
        saved = ()

        def backward(g):
            return _unbroadcast(g, a_shape), _unbroadcast(g, b_shape)
    elif op == "sub":
        saved = ()

        def backward(g):
            return _unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)
    elif op == "mul":
        saved = (a, b)

        def backward(g):
            return (_unbroadcast(g * b.nd, a_shape),
                    _unbroadcast(g * a.nd, b_shape))
    else:  # div
        saved = (a, b)

        def backward(g):
            bn = b.nd
            with np.errstate(divide="ignore", invalid="ignore"):
                da = g / bn
                db = -g * a.nd / (bn * bn)
            return _unbroadcast(da, a_shape), _unbroadcast(db, b_shape)

    result.requires_grad = True
    result.node = _graph.Node(op, (a, b), saved, backward)


# --- matrix multiplication ---

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(m,k)@(k,n); also batched (B,m,k)@(k,n) and (B,m,k)@(B,k,n)."""
    _require_float32(a, b)
    sa, sb = a.shape, b.shape
    if len(sa) == 2 and len(sb) == 2:
        if sa[1] != sb[0]:
            raise ShapeMismatch(f"Shape mismatch: {sa} @ {sb}")
        macs = sa[0] * sa[1] * sb[1]
    elif len(sa) == 3 and len(sb) == 2:
        if sa[2] != sb[0]:
            raise ShapeMismatch(f"Shape mismatch: {sa} @ {sb}")
        macs = sa[0] * sa[1] * sa[2] * sb[1]
    elif len(sa) == 3 and len(sb) == 3:
        if sa[0] != sb[0] or sa[2] != sb[1]:
            raise ShapeMismatch(f"Shape mismatch: {sa} @ {sb}")
        macs = sa[0] * sa[1] * sa[2] * sb[2]
    else:
        raise ShapeMismatch(f"Shape mismatch: {sa} @ {sb}")
    tracker.add_macs(macs)
    out = a.nd @ b.nd
    result = Tensor._wrap(out)
    if _graph.should_record((a, b)):
        def backward(g):
            an, bn = a.nd, b.nd
            if len(sa) == 2 and len(sb) == 2:
                return g @ bn.T, an.T @ g
            if len(sa) == 3 and len(sb) == 2:
                return g @ bn.T, np.einsum("bmk,bmn->kn", an, g)
            return g @ bn.transpose(0, 2, 1), an.transpose(0, 2, 1) @ g

        result.requires_grad = True
        result.node = _graph.Node("matmul", (a, b), (a, b), backward)
    return result


# --- reductions ---

def _check_axis(axis: int, rank: int) -> int:
    if not -rank <= axis < rank:
        raise AxisOutOfRange(f"axis {axis} out of range for rank {rank}")
    return axis % rank if rank else 0


def reduce(op: str, t: Tensor, axis: Optional[int] = None) -> Tensor:
    """sum / mean / max; full reduction to rank-0 when axis is omitted."""
    _require_float32(t)
    if axis is not None:
        axis = _check_axis(axis, t.rank)
    tn = t.nd
    if op == "sum":
        out = tn.sum(axis=axis, dtype=np.float32)
    elif op == "mean":
        out = tn.mean(axis=axis, dtype=np.float32)
    elif op == "max":
        out = tn.max(axis=axis)
    else:
        raise ValueError(f"unknown reduction {op!r}")
    result = Tensor._wrap(np.asarray(out, dtype=np.float32))
    if _graph.should_record((t,)):
        _record_reduce(op, t, axis, result)
    return result


def _record_reduce(op: str, t: Tensor, axis: Optional[int], result: Tensor) -> None:
    in_shape = t.shape
    count = t.size if axis is None else in_shape[axis]
    if op in ("sum", "mean"):
        saved = ()

        def backward(g):
            scale = 1.0 / count if op == "mean" else 1.0
            if axis is None:
                return (np.full(in_shape, g.reshape(())[()] * scale,
                                dtype=np.float32),)
            ge = np.expand_dims(g, axis) * np.float32(scale)
            return (np.broadcast_to(ge, in_shape).astype(np.float32),)
    else:  # max: subgradient routed to the first argmax (row-major order)
        saved = (t,)

        def backward(g):
            tn = t.nd
            dx = np.zeros(in_shape, dtype=np.float32)
            if axis is None:
                idx = int(np.argmax(t.data))
                dx.reshape(-1)[idx] = g.reshape(())[()]
            else:
                idx = np.expand_dims(np.argmax(tn, axis=axis), axis)
                np.put_along_axis(dx, idx, np.expand_dims(g, axis), axis=axis)
            return (dx,)

    result.requires_grad = True
    result.node = _graph.Node(op, (t,), saved, backward)


# --- shape manipulation ---

def reshape(t: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(e) for e in shape)
    if shape.count(-1) == 1:
        rest = _shape_product([e for e in shape if e != -1])
        if rest == 0 or t.size % rest:
            raise ShapeMismatch(f"cannot reshape {t.shape} to {shape}")
        shape = tuple(t.size // rest if e == -1 else e for e in shape)
    if _shape_product(shape) != t.size:
        raise ShapeMismatch(
            f"cannot reshape {t.shape} ({t.size} elements) to {shape}"
        )
    result = Tensor._wrap(t.data.copy().reshape(shape), t.dtype)
    if _graph.should_record((t,)):
        in_shape = t.shape

        def backward(g):
            return (g.reshape(in_shape),)

        result.requires_grad = True
        result.node = _graph.Node("reshape", (t,), (), backward)
    return result


def transpose(t: Tensor, perm: Sequence[int]) -> Tensor:
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(t.rank)):
        raise InvalidPermutation(f"{perm} is not a permutation of rank {t.rank}")
    result = Tensor._wrap(np.ascontiguousarray(t.nd.transpose(perm)), t.dtype)
    if _graph.should_record((t,)):
        inv = tuple(int(i) for i in np.argsort(perm))

        def backward(g):
            return (np.ascontiguousarray(g.transpose(inv)),)

        result.requires_grad = True
        result.node = _graph.Node("transpose", (t,), (), backward)
    return result


def reshape_transpose(t: Tensor, spec: Sequence[int], *, permute: bool = False) -> Tensor:
    """Single entry point: new shape by default, axis permutation if asked."""
    return transpose(t, spec) if permute else reshape(t, spec)


# --- misc plumbing (not differentiable) ---

def argmax(t: Tensor, axis: Optional[int] = None) -> Tensor:
    """Index of the (first) maximum; Int64 output, never on the tape."""
    if axis is not None:
        axis = _check_axis(axis, t.rank)
    idx = np.argmax(t.nd, axis=axis)
    return Tensor._wrap(np.asarray(idx, dtype=np.int64), DType.INT64)
