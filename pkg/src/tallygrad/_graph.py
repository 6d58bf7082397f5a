"""Recording machinery shared by tensor ops and the autograd entry points.

Gradient tracking is an opt-in mode, scoped to the current execution context
(thread / contextvars context).  While the mode is off, no graph node is ever
created and tensors stay plain data containers.  While it is on, every op
whose inputs participate in differentiation appends a Node; the recorded
graph hangs off the result tensors themselves, so releasing the results
releases the saved intermediates.
"""

from __future__ import annotations

import contextvars
import itertools
from typing import Callable, Sequence

from . import tracker

_grad_mode: contextvars.ContextVar[bool] = contextvars.ContextVar(
    "grad_mode", default=False
)
_suspend_depth: contextvars.ContextVar[int] = contextvars.ContextVar(
    "no_grad_depth", default=0
)

_node_ids = itertools.count(1)


def grad_mode_enabled() -> bool:
    return _grad_mode.get()


def set_grad_mode(enabled: bool) -> None:
    _grad_mode.set(enabled)


def recording() -> bool:
    return _grad_mode.get() and _suspend_depth.get() == 0


class no_grad:
    """Suspend recording within a block (used for inference and backward)."""

    def __enter__(self):
        _suspend_depth.set(_suspend_depth.get() + 1)
        return self

    def __exit__(self, *exc):
        _suspend_depth.set(_suspend_depth.get() - 1)
        return False


class Node:
    """One recorded op: inputs, saved values, and its backward rule.

    ids increase monotonically with creation order, so any list of reachable
    nodes sorted by id descending is a reverse topological order.
    """

    __slots__ = ("node_id", "op_kind", "inputs", "saved", "backward_fn")

    def __init__(self, op_kind: str, inputs: Sequence, saved: Sequence,
                 backward_fn: Callable):
        self.node_id = next(_node_ids)
        self.op_kind = op_kind
        self.inputs = tuple(inputs)
        self.saved = tuple(saved)
        self.backward_fn = backward_fn
        tracker.on_tape_node(sum(t.memory_footprint() for t in self.saved))


def should_record(inputs) -> bool:
    if not recording():
        return False
    for t in inputs:
        if getattr(t, "requires_grad", False) or getattr(t, "node", None) is not None:
            return True
    return False
