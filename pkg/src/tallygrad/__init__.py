"""A CPU-only ML framework where every op carries explicit resource accounting."""

from .tensor import (
    DType,
    Tensor,
    argmax,
    broadcast_shapes,
    elementwise,
    full,
    matmul,
    memory_footprint,
    ones,
    reduce,
    reshape,
    reshape_transpose,
    tensor_new,
    transpose,
    zeros,
)
from .autograd import (
    backward,
    count_graph,
    disable_autograd,
    enable_autograd,
    autograd_enabled,
    grad_check,
    no_grad,
    to_dot,
    zero_grad,
)
from . import errors, tracker
from .rng import Rng

__version__ = "0.1.0"
