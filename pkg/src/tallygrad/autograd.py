"""Reverse-mode differentiation over the recorded op graph.

The mode starts disabled: tensors are plain data containers and no graph is
ever built.  enable_autograd() switches the current execution context into
gradient-tracking mode; from then on tensors may be created with
requires_grad and ops record nodes.  backward() walks the recorded graph in
reverse creation order, seeding d(out)/d(out) = 1 and summing gradients into
every reachable leaf.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _graph
from ._graph import no_grad
from .errors import BackwardFromNonScalar, DisconnectedGraph, GradModeOff
from .tensor import Tensor

__all__ = [
    "enable_autograd", "disable_autograd", "autograd_enabled", "no_grad",
    "backward", "zero_grad", "grad_check", "count_graph", "GradCheckReport",
    "GraphStats", "to_dot",
]


def enable_autograd() -> None:
    """Turn gradient tracking on for the current context (idempotent)."""
    _graph.set_grad_mode(True)


def disable_autograd() -> None:
    _graph.set_grad_mode(False)


def autograd_enabled() -> bool:
    return _graph.grad_mode_enabled()


def _reachable_nodes(t: Tensor) -> list[_graph.Node]:
    if t.node is None:
        raise DisconnectedGraph(
            "tensor has no recorded graph; it was computed outside grad mode "
            "or from inputs that do not require gradients"
        )
    seen: dict[int, _graph.Node] = {}
    stack = [t.node]
    while stack:
        node = stack.pop()
        if node.node_id in seen:
            continue
        seen[node.node_id] = node
        for inp in node.inputs:
            if inp.node is not None:
                stack.append(inp.node)
    return sorted(seen.values(), key=lambda n: n.node_id, reverse=True)


def backward(t: Tensor) -> None:
    """Accumulate d(t)/d(leaf) into every reachable leaf's .grad."""
    if not _graph.grad_mode_enabled():
        raise GradModeOff("backward() needs autograd enabled")
    if t.size != 1:
        raise BackwardFromNonScalar(
            f"backward() starts from a single-element tensor, got shape {t.shape}"
        )
    order = _reachable_nodes(t)
    grads: dict[int, np.ndarray] = {
        t.node.node_id: np.ones(t.shape, dtype=np.float32)
    }
    with no_grad():
        for node in order:
            g = grads.pop(node.node_id, None)
            if g is None:
                continue
            input_grads = node.backward_fn(g)
            for inp, gi in zip(node.inputs, input_grads):
                if gi is None:
                    continue
                gi = np.asarray(gi, dtype=np.float32)
                if inp.node is not None:
                    acc = grads.get(inp.node.node_id)
                    grads[inp.node.node_id] = gi if acc is None else acc + gi
                elif inp.requires_grad:
                    if inp.grad is None:
                        inp.grad = Tensor._wrap(gi.reshape(inp.shape).copy())
                    else:
                        inp.grad.data += gi.reshape(-1)


def zero_grad(params: list[Tensor]) -> None:
    """Clear (unset) gradients so their bytes are released, not zero-filled."""
    for p in params:
        p.grad = None


@dataclass
class GraphStats:
    node_count: int
    saved_bytes: int


def count_graph(t: Tensor) -> GraphStats:
    """Reachable node count plus bytes of saved intermediates (deduplicated),
    i.e. the activation memory the backward pass is holding alive."""
    nodes = _reachable_nodes(t)
    seen_buffers: set[int] = set()
    saved_bytes = 0
    for node in nodes:
        for s in node.saved:
            if id(s) not in seen_buffers:
                seen_buffers.add(id(s))
                saved_bytes += s.memory_footprint()
    return GraphStats(node_count=len(nodes), saved_bytes=saved_bytes)


@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor,
               epsilon: float = 3e-3, tolerance: float = 1e-4) -> GradCheckReport:
    """Compare the recorded gradient of a scalar-valued f against central
    differences, coordinate by coordinate.

    The error is normalized by the largest gradient magnitude (not
    per-coordinate), which is the meaningful scale in Float32: near-zero
    components would otherwise amplify rounding noise into false alarms.
    """
    x.grad = None
    y = f(x)
    backward(y)
    if x.grad is None:
        raise DisconnectedGraph("f(x) does not depend on x")
    analytic = x.grad.data.copy()
    x.grad = None

    numeric = np.zeros_like(analytic)
    with no_grad():
        for i in range(x.size):
            orig = float(x.data[i])
            step = epsilon * max(1.0, abs(orig))
            x_hi = np.float32(orig + step)
            x_lo = np.float32(orig - step)
            x.data[i] = x_hi
            hi = float(f(x).item())
            x.data[i] = x_lo
            lo = float(f(x).item())
            x.data[i] = np.float32(orig)
            # divide by the step actually applied after float32 rounding
            numeric[i] = (hi - lo) / (float(x_hi) - float(x_lo))

    scale = max(float(np.max(np.abs(analytic))),
                float(np.max(np.abs(numeric))), 1e-8)
    max_rel = float(np.max(np.abs(analytic - numeric))) / scale
    return GradCheckReport(max_rel_error=max_rel, passed=max_rel <= tolerance)


def to_dot(t: Tensor) -> str:
    """Render the graph reachable from t as DOT text (op_kind#id labels)."""
    nodes = _reachable_nodes(t)
    lines = ["digraph {"]
    ids = {n.node_id for n in nodes}
    leaf_names: dict[int, str] = {}
    for node in nodes:
        lines.append(f'  n{node.node_id} [label="{node.op_kind}#{node.node_id}"];')
    for node in nodes:
        for inp in node.inputs:
            if inp.node is not None and inp.node.node_id in ids:
                lines.append(f"  n{inp.node.node_id} -> n{node.node_id};")
            elif inp.requires_grad:
                if id(inp) not in leaf_names:
                    name = f"leaf{len(leaf_names)}"
                    leaf_names[id(inp)] = name
                    lines.append(f'  {name} [label="leaf#{len(leaf_names) - 1}", shape=box];')
                lines.append(f"  {leaf_names[id(inp)]} -> n{node.node_id};")
    lines.append("}")
    return "\n".join(lines)
