"""Framework-level resource counters.

Every Tensor construction/destruction reports its buffer size here, so live
and peak byte figures describe exactly what the framework allocated (numpy
scratch temporaries inside a single op are deliberately not counted).  Ops
with a defined arithmetic cost report multiply-accumulates, attention reports
its score-matrix materialization, and the generation loop reports key/value
position computations.  Counters are plain ints mutated on one thread; a
training or benchmark session owns them for its duration.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class CounterSnapshot:
    live_bytes: int
    peak_bytes: int
    total_alloc_bytes: int
    macs: int
    tape_nodes: int
    tape_saved_bytes: int
    attention_score_bytes: int
    kv_positions_computed: int
    kv_appends: int


_live_bytes = 0
_peak_bytes = 0
_total_alloc_bytes = 0
_macs = 0
_tape_nodes = 0
_tape_saved_bytes = 0
_attention_score_bytes = 0
_kv_positions_computed = 0
_kv_appends = 0


def on_alloc(nbytes: int) -> None:
    global _live_bytes, _peak_bytes, _total_alloc_bytes
    _live_bytes += nbytes
    _total_alloc_bytes += nbytes
    if _live_bytes > _peak_bytes:
        _peak_bytes = _live_bytes


def on_free(nbytes: int) -> None:
    global _live_bytes
    _live_bytes -= nbytes


def add_macs(n: int) -> None:
    global _macs
    _macs += n


def on_tape_node(saved_bytes: int) -> None:
    global _tape_nodes, _tape_saved_bytes
    _tape_nodes += 1
    _tape_saved_bytes += saved_bytes


def add_attention_score_bytes(n: int) -> None:
    global _attention_score_bytes
    _attention_score_bytes += n


def add_kv_positions(n: int) -> None:
    global _kv_positions_computed
    _kv_positions_computed += n


def add_kv_append(n: int = 1) -> None:
    global _kv_appends
    _kv_appends += n


def live_bytes() -> int:
    return _live_bytes


def peak_bytes() -> int:
    return _peak_bytes


def macs() -> int:
    return _macs


def snapshot() -> CounterSnapshot:
    return CounterSnapshot(
        live_bytes=_live_bytes,
        peak_bytes=_peak_bytes,
        total_alloc_bytes=_total_alloc_bytes,
        macs=_macs,
        tape_nodes=_tape_nodes,
        tape_saved_bytes=_tape_saved_bytes,
        attention_score_bytes=_attention_score_bytes,
        kv_positions_computed=_kv_positions_computed,
        kv_appends=_kv_appends,
    )


def reset_peak() -> None:
    """Restart the high-water mark from the current live figure."""
    global _peak_bytes
    _peak_bytes = _live_bytes


def reset_op_counters() -> None:
    """Zero the cumulative op counters (MACs, tape, attention, KV)."""
    global _total_alloc_bytes, _macs, _tape_nodes, _tape_saved_bytes
    global _attention_score_bytes, _kv_positions_computed, _kv_appends
    _total_alloc_bytes = 0
    _macs = 0
    _tape_nodes = 0
    _tape_saved_bytes = 0
    _attention_score_bytes = 0
    _kv_positions_computed = 0
    _kv_appends = 0
