"""Training loop: cosine LR schedule, gradient clipping, peak-memory watch,
and a bit-exact binary checkpoint format."""

from __future__ import annotations

import json
import math
import struct
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import tracker
from .autograd import backward
from .data import DataLoader, Dataset
from .errors import (
    CorruptCheckpoint,
    MissingGrad,
    MissingTensor,
    NonFiniteLoss,
    StepOutOfRange,
)
from .nn import cross_entropy_loss, mse_loss
from .optim import optimizer_new
from .tensor import DType, Tensor, argmax


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float) -> float:
    """lr_min + 0.5 (lr_max - lr_min) (1 + cos(pi * step / total_steps))."""
    if total_steps < 1 or not 0 <= step <= total_steps:
        raise StepOutOfRange(f"step {step} outside [0, {total_steps}]")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))


def clip_grad_norm(params: list[Tensor], max_norm: float) -> float:
    """Scale all gradients by max_norm / global_l2_norm when the global norm
    exceeds the bound; returns the applied factor (1.0 = untouched)."""
    sq = 0.0
    for i, p in enumerate(params):
        if p.grad is None:
            raise MissingGrad(f"parameter {i} has no gradient")
        g = p.grad.data
        sq += float(np.dot(g.astype(np.float64), g.astype(np.float64)))
    norm = math.sqrt(sq)
    if norm <= max_norm or norm == 0.0:
        return 1.0
    factor = max_norm / norm
    for p in params:
        p.grad.data *= np.float32(factor)
    return factor


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int
    optimizer: str = "adam"
    lr_max: float = 1e-3
    lr_min: float = 0.0
    clip_norm: Optional[float] = None
    seed: int = 0
    loss: str = "cross_entropy"  # or "mse"
    shuffle: bool = True
    drop_last: bool = False
    hyper: dict = field(default_factory=dict)


@dataclass
class TrainReport:
    epoch_loss: list[float]
    epoch_accuracy: list[float]
    epoch_wall_time: list[float]
    peak_bytes: int
    steps: int

    @property
    def final_loss(self) -> float:
        return self.epoch_loss[-1]


def _batch_accuracy(logits: Tensor, targets: Tensor) -> Optional[float]:
    if targets.dtype is not DType.INT64:
        return None
    pred = argmax(logits, axis=-1)
    return float(np.mean(pred.data == targets.data))


def train(model, ds: Dataset, cfg: TrainConfig,
          progress: Optional[Callable[[dict], None]] = None) -> TrainReport:
    """Generic loop: forward -> loss -> backward -> clip -> step -> zero_grad,
    cosine schedule applied per optimizer step, peak bytes from the framework
    allocation counter.  `model` exposes forward(inputs) and parameters()."""
    params = model.parameters()
    opt = optimizer_new(cfg.optimizer, params, lr=cfg.lr_max, **cfg.hyper)
    loader = DataLoader(ds, cfg.batch_size, shuffle=cfg.shuffle,
                        seed=cfg.seed, drop_last=cfg.drop_last)
    loss_fn = cross_entropy_loss if cfg.loss == "cross_entropy" else mse_loss
    total_steps = max(1, cfg.epochs * len(loader))

    tracker.reset_peak()
    report = TrainReport([], [], [], 0, 0)
    step = 0
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        losses = []
        correct = 0.0
        seen = 0
        for batch in loader:
            opt.lr = cosine_lr(step, total_steps, cfg.lr_max, cfg.lr_min)
            logits = model.forward(batch.inputs)
            targets = batch.targets
            if cfg.loss == "cross_entropy" and targets.rank > 1:
                # sequence models emit flat (batch*positions, classes) logits
                targets = Tensor._wrap(targets.nd.reshape(-1), DType.INT64)
            loss = loss_fn(logits, targets)
            value = loss.item()
            if not math.isfinite(value):
                raise NonFiniteLoss(f"non-finite loss at step {step}")
            backward(loss)
            for i, p in enumerate(params):
                if p.grad is not None and not np.all(np.isfinite(p.grad.data)):
                    raise NonFiniteLoss(f"non-finite gradient at step {step}")
            if cfg.clip_norm is not None:
                clip_grad_norm(params, cfg.clip_norm)
            opt.step()
            opt.zero_grad()
            losses.append(value)
            acc = _batch_accuracy(logits, targets)
            if acc is not None:
                correct += acc * len(batch)
                seen += len(batch)
            step += 1
        epoch_loss = float(np.mean(losses)) if losses else float("nan")
        epoch_acc = correct / seen if seen else float("nan")
        wall = time.perf_counter() - t0
        report.epoch_loss.append(epoch_loss)
        report.epoch_accuracy.append(epoch_acc)
        report.epoch_wall_time.append(wall)
        if progress is not None:
            progress({"epoch": epoch, "loss": epoch_loss, "acc": epoch_acc,
                      "lr": opt.lr, "peak_bytes": tracker.peak_bytes()})
    report.peak_bytes = tracker.peak_bytes()
    report.steps = step
    return report


# --- checkpointing ----------------------------------------------------------

_MAGIC = b"TTCK"
_VERSION = 1


def checkpoint_save(params: dict[str, Tensor], path: str) -> int:
    """Binary container: magic, version u16, manifest length u32, JSON
    manifest [{name, shape, dtype, offset, byte_len}], raw LE buffers.
    Returns the total byte size written."""
    entries = []
    blobs = []
    offset = 0
    for name, t in params.items():
        blob = t.data.astype(t.dtype.np_dtype.newbyteorder("<")).tobytes()
        entries.append({"name": name, "shape": list(t.shape),
                        "dtype": t.dtype.value, "offset": offset,
                        "byte_len": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    manifest = json.dumps(entries).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<H", _VERSION))
        f.write(struct.pack("<I", len(manifest)))
        f.write(manifest)
        for blob in blobs:
            f.write(blob)
    return 4 + 2 + 4 + len(manifest) + offset


def checkpoint_load(path: str) -> dict[str, Tensor]:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 10 or raw[:4] != _MAGIC:
        raise CorruptCheckpoint("bad magic")
    (version,) = struct.unpack("<H", raw[4:6])
    if version != _VERSION:
        raise CorruptCheckpoint(f"unsupported version {version}")
    (manifest_len,) = struct.unpack("<I", raw[6:10])
    if len(raw) < 10 + manifest_len:
        raise CorruptCheckpoint("truncated manifest")
    try:
        entries = json.loads(raw[10:10 + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptCheckpoint(f"unreadable manifest: {e}") from e
    data = raw[10 + manifest_len:]
    out: dict[str, Tensor] = {}
    for entry in entries:
        dtype = DType(entry["dtype"])
        start, length = entry["offset"], entry["byte_len"]
        if start + length > len(data):
            raise CorruptCheckpoint(f"truncated buffer for {entry['name']!r}")
        buf = np.frombuffer(data[start:start + length],
                            dtype=dtype.np_dtype.newbyteorder("<"))
        expected = 1
        for e in entry["shape"]:
            expected *= e
        if buf.size != expected:
            raise CorruptCheckpoint(f"length mismatch for {entry['name']!r}")
        out[entry["name"]] = Tensor._wrap(
            buf.astype(dtype.np_dtype).reshape(entry["shape"]), dtype)
    return out


def checkpoint_restore(params: dict[str, Tensor], path: str) -> None:
    """Load buffers into existing tensors by name; exact-set match required."""
    loaded = checkpoint_load(path)
    missing = set(params) - set(loaded)
    extra = set(loaded) - set(params)
    if missing or extra:
        raise MissingTensor(f"missing={sorted(missing)} unexpected={sorted(extra)}")
    for name, t in params.items():
        src = loaded[name]
        if src.shape != t.shape or src.dtype is not t.dtype:
            raise MissingTensor(f"shape/dtype mismatch for {name!r}")
        t.data[...] = src.data
