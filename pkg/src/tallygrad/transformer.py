"""Decoder-only transformer built from the framework's own ops.

Blocks are pre-norm: x + MHA(LN(x)) then x + MLP(LN(x)), with an MLP of
Linear(d, 4d) -> GELU -> Linear(4d, d).  Generation runs either uncached
(recomputing keys/values for the whole sequence every step) or with a
preallocated KV cache that appends one position per step; both paths must
produce identical greedy output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _graph, tracker
from .autograd import no_grad
from .errors import (
    CacheOverflow,
    DomainError,
    OddDimension,
    SequenceTooLong,
    ShapeMismatch,
    TokenIdOutOfRange,
)
from .nn import LinearLayer, gelu, softmax, xavier_init
from .rng import Rng
from .tensor import DType, Tensor, matmul, reshape, transpose, zeros


def embed(table: Tensor, ids: Tensor) -> Tensor:
    """Row gather; the backward pass accumulates only into gathered rows."""
    if ids.dtype is not DType.INT64:
        raise TokenIdOutOfRange("ids must be an Int64 tensor")
    vocab, _ = table.shape
    flat = ids.data
    if flat.size and (flat.min() < 0 or flat.max() >= vocab):
        raise TokenIdOutOfRange(f"token id outside [0, {vocab})")
    out = table.nd[flat].reshape(ids.shape + (table.shape[1],))
    result = Tensor._wrap(out)
    if _graph.should_record((table,)):
        def backward(g):
            dt = np.zeros(table.shape, dtype=np.float32)
            np.add.at(dt, flat, g.reshape(flat.size, table.shape[1]))
            return dt, None

        result.requires_grad = True
        result.node = _graph.Node("embed", (table, ids), (ids,), backward)
    return result


def positional_encoding(kind: str, max_seq: int, d_model: int,
                        rng: Optional[Rng] = None) -> Tensor:
    """sinusoidal: fixed sin/cos interleave; learned: Xavier trainable table."""
    if kind == "sinusoidal":
        if d_model % 2:
            raise OddDimension("sinusoidal encoding needs an even d_model")
        pos = np.arange(max_seq, dtype=np.float64)[:, None]
        i = np.arange(d_model // 2, dtype=np.float64)[None, :]
        angle = pos / np.power(10000.0, 2.0 * i / d_model)
        pe = np.zeros((max_seq, d_model), dtype=np.float32)
        pe[:, 0::2] = np.sin(angle)
        pe[:, 1::2] = np.cos(angle)
        return Tensor._wrap(pe)
    if kind == "learned":
        if rng is None:
            raise DomainError("learned positional table needs an rng")
        table = xavier_init(d_model, max_seq, rng)
        table.requires_grad = _graph.grad_mode_enabled()
        return table
    raise DomainError(f"unknown positional encoding kind {kind!r}")


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor,
               eps: float = 1e-5) -> Tensor:
    """(x - mean)/sqrt(var + eps) * gain + shift over the last axis."""
    xn = x.nd
    mu = xn.mean(axis=-1, keepdims=True)
    var = ((xn - mu) ** 2).mean(axis=-1, keepdims=True)
    r = 1.0 / np.sqrt(var + eps)
    xh = (xn - mu) * r
    out = xh * gain.nd + shift.nd
    result = Tensor._wrap(out.astype(np.float32, copy=False))
    if _graph.should_record((x, gain, shift)):
        xh_t = Tensor._wrap(xh.astype(np.float32, copy=False))
        r_t = Tensor._wrap(np.broadcast_to(r, r.shape).astype(np.float32))
        n = x.shape[-1]
        lead = tuple(range(x.rank - 1))

        def backward(g):
            gg = g * gain.nd
            xhn = xh_t.nd
            rn = r_t.nd
            m1 = gg.mean(axis=-1, keepdims=True)
            m2 = (gg * xhn).mean(axis=-1, keepdims=True)
            dx = rn * (gg - m1 - xhn * m2)
            dgain = (g * xhn).sum(axis=lead)
            dshift = g.sum(axis=lead)
            return dx, dgain, dshift

        result.requires_grad = True
        result.node = _graph.Node("layer_norm", (x, gain, shift),
                                  (xh_t, r_t), backward)
    return result


class KVCache:
    """Per-layer, per-head append-only key/value store, preallocated at
    max_seq so its byte cost is fixed: layers*heads*max_seq*head_dim*2*4."""

    def __init__(self, layers: int, heads: int, max_seq: int, head_dim: int):
        self.layers = layers
        self.heads = heads
        self.max_seq = max_seq
        self.head_dim = head_dim
        self._k = zeros((layers, heads, max_seq, head_dim))
        self._v = zeros((layers, heads, max_seq, head_dim))
        self._fill = [0] * layers

    @property
    def filled_len(self) -> int:
        return max(self._fill)

    def memory_footprint(self) -> int:
        return self._k.memory_footprint() + self._v.memory_footprint()

    def append(self, layer: int, k_new: np.ndarray,
               v_new: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Write n fresh positions for one layer; returns the filled views."""
        n = k_new.shape[1]
        pos = self._fill[layer]
        if pos + n > self.max_seq:
            raise CacheOverflow(
                f"cache capacity {self.max_seq} exceeded ({pos} + {n})"
            )
        kb = self._k.nd
        vb = self._v.nd
        kb[layer, :, pos:pos + n] = k_new
        vb[layer, :, pos:pos + n] = v_new
        self._fill[layer] = pos + n
        return kb[layer, :, :pos + n], vb[layer, :, :pos + n]


def _causal_mask(n_q: int, n_k: int, offset: int) -> Tensor:
    """Additive mask: -inf where key position > query position + offset."""
    q_pos = np.arange(n_q)[:, None] + offset
    k_pos = np.arange(n_k)[None, :]
    mask = np.where(k_pos > q_pos, -np.inf, 0.0).astype(np.float32)
    return Tensor._wrap(mask)


def attention(q: Tensor, k: Tensor, v: Tensor, causal: bool = False,
              cache: Optional[KVCache] = None, layer: int = 0) -> Tensor:
    """Scaled dot-product over (B, h, N, d_h) tensors.

    scores = q k^T / sqrt(d_h), causal masking adds -inf above the diagonal
    before the softmax, and the (N, N) score materialization is reported to
    the profiler.  With a cache, k/v are appended and attention runs over
    all filled positions.
    """
    if (q.rank != 4 or v.shape != k.shape
            or (cache is None and k.shape != q.shape)):
        raise ShapeMismatch(
            f"attention needs matching (B,h,N,d_h) tensors, got "
            f"{q.shape} {k.shape} {v.shape}"
        )
    b, h, n, dh = q.shape
    scale = 1.0 / math.sqrt(dh)

    if cache is not None:
        if b != 1:
            raise ShapeMismatch("cached attention is single-sequence (B=1)")
        offset = cache._fill[layer]
        k_all, v_all = cache.append(layer, k.nd[0], v.nd[0])
        total = k_all.shape[1]
        q3 = reshape(q, (h, n, dh))
        k_t = Tensor._wrap(np.ascontiguousarray(k_all.transpose(0, 2, 1)))
        v_t = Tensor._wrap(np.ascontiguousarray(v_all))
        scores = matmul(q3, k_t) * scale
        tracker.add_attention_score_bytes(scores.memory_footprint())
        if causal:
            scores = scores + _causal_mask(n, total, offset)
        probs = softmax(scores, axis=2)
        out = matmul(probs, v_t)
        return reshape(out, (1, h, n, dh))

    q3 = reshape(q, (b * h, n, dh))
    k3 = reshape(k, (b * h, n, dh))
    v3 = reshape(v, (b * h, n, dh))
    scores = matmul(q3, transpose(k3, (0, 2, 1))) * scale
    tracker.add_attention_score_bytes(scores.memory_footprint())
    if causal:
        scores = scores + _causal_mask(n, n, 0)
    probs = softmax(scores, axis=2)
    out = matmul(probs, v3)
    return reshape(out, (b, h, n, dh))


def attention_score_bytes(n: int, heads: int = 1, batch: int = 1) -> int:
    """Bytes materialized by one attention score matrix (the O(N^2) term)."""
    return batch * heads * n * n * 4


@dataclass
class GPTConfig:
    vocab_size: int
    d_model: int
    n_heads: int
    n_layers: int
    max_seq: int
    mlp_ratio: int = 4

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise DomainError("d_model must be divisible by n_heads")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


class MultiHeadAttention:
    def __init__(self, cfg: GPTConfig, rng: Rng):
        d = cfg.d_model
        self.cfg = cfg
        self.wq = LinearLayer(d, d, rng)
        self.wk = LinearLayer(d, d, rng)
        self.wv = LinearLayer(d, d, rng)
        self.wo = LinearLayer(d, d, rng)

    def parameters(self) -> list[Tensor]:
        return (self.wq.parameters() + self.wk.parameters() +
                self.wv.parameters() + self.wo.parameters())

    def forward(self, x: Tensor, cache: Optional[KVCache] = None,
                layer: int = 0) -> Tensor:
        b, n, d = x.shape
        h, dh = self.cfg.n_heads, self.cfg.head_dim

        def split(t: Tensor) -> Tensor:
            return transpose(reshape(t, (b, n, h, dh)), (0, 2, 1, 3))

        q = split(self.wq.forward(x))
        k = split(self.wk.forward(x))
        v = split(self.wv.forward(x))
        out = attention(q, k, v, causal=True, cache=cache, layer=layer)
        out = reshape(transpose(out, (0, 2, 1, 3)), (b, n, d))
        return self.wo.forward(out)


class TransformerBlock:
    def __init__(self, cfg: GPTConfig, rng: Rng):
        d = cfg.d_model
        self.ln1_gain = _ln_param(d, 1.0)
        self.ln1_shift = _ln_param(d, 0.0)
        self.attn = MultiHeadAttention(cfg, rng)
        self.ln2_gain = _ln_param(d, 1.0)
        self.ln2_shift = _ln_param(d, 0.0)
        self.mlp_up = LinearLayer(d, cfg.mlp_ratio * d, rng)
        self.mlp_down = LinearLayer(cfg.mlp_ratio * d, d, rng)

    def parameters(self) -> list[Tensor]:
        return ([self.ln1_gain, self.ln1_shift, self.ln2_gain, self.ln2_shift]
                + self.attn.parameters()
                + self.mlp_up.parameters() + self.mlp_down.parameters())

    def forward(self, x: Tensor, cache: Optional[KVCache] = None,
                layer: int = 0) -> Tensor:
        attn_in = layer_norm(x, self.ln1_gain, self.ln1_shift)
        x = x + self.attn.forward(attn_in, cache=cache, layer=layer)
        mlp_in = layer_norm(x, self.ln2_gain, self.ln2_shift)
        hidden = gelu(self.mlp_up.forward(mlp_in))
        return x + self.mlp_down.forward(hidden)


def _ln_param(d: int, value: float) -> Tensor:
    t = Tensor([value] * d, shape=(d,))
    t.requires_grad = _graph.grad_mode_enabled()
    return t


class GPT:
    """Token + learned positional embeddings, pre-norm blocks, final LN,
    untied vocab projection."""

    def __init__(self, cfg: GPTConfig, seed: int = 0):
        rng = Rng(seed)
        self.cfg = cfg
        self.token_table = xavier_init(cfg.d_model, cfg.vocab_size, rng)
        self.token_table.requires_grad = _graph.grad_mode_enabled()
        self.pos_table = positional_encoding("learned", cfg.max_seq,
                                             cfg.d_model, rng)
        self.blocks = [TransformerBlock(cfg, rng) for _ in range(cfg.n_layers)]
        self.ln_f_gain = _ln_param(cfg.d_model, 1.0)
        self.ln_f_shift = _ln_param(cfg.d_model, 0.0)
        self.head = LinearLayer(cfg.d_model, cfg.vocab_size, rng)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = [("token_table", self.token_table), ("pos_table", self.pos_table)]
        for i, blk in enumerate(self.blocks):
            names = ["ln1_gain", "ln1_shift", "ln2_gain", "ln2_shift",
                     "wq.weight", "wq.bias", "wk.weight", "wk.bias",
                     "wv.weight", "wv.bias", "wo.weight", "wo.bias",
                     "mlp_up.weight", "mlp_up.bias",
                     "mlp_down.weight", "mlp_down.bias"]
            out.extend((f"block{i}.{n}", p)
                       for n, p in zip(names, blk.parameters()))
        out.append(("ln_f_gain", self.ln_f_gain))
        out.append(("ln_f_shift", self.ln_f_shift))
        out.append(("head.weight", self.head.weight))
        out.append(("head.bias", self.head.bias))
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def forward(self, ids: Tensor, cache: Optional[KVCache] = None) -> Tensor:
        """ids (B, N) Int64 -> logits (B, N, vocab)."""
        if ids.rank != 2:
            raise ShapeMismatch(f"ids must be (B, N), got {ids.shape}")
        b, n = ids.shape
        offset = cache.filled_len if cache is not None else 0
        if offset + n > self.cfg.max_seq:
            raise SequenceTooLong(
                f"sequence {offset + n} exceeds max_seq {self.cfg.max_seq}"
            )
        tracker.add_kv_positions(n)
        if cache is not None:
            tracker.add_kv_append(1)
        pos_ids = Tensor._wrap(np.arange(offset, offset + n, dtype=np.int64),
                               DType.INT64)
        x = embed(self.token_table, ids) + embed(self.pos_table, pos_ids)
        for i, blk in enumerate(self.blocks):
            x = blk.forward(x, cache=cache, layer=i)
        x = layer_norm(x, self.ln_f_gain, self.ln_f_shift)
        return self.head.forward(x)


def gpt_forward(model: GPT, ids: Tensor, cache: Optional[KVCache] = None) -> Tensor:
    return model.forward(ids, cache=cache)


def new_cache(cfg: GPTConfig) -> KVCache:
    return KVCache(cfg.n_layers, cfg.n_heads, cfg.max_seq, cfg.head_dim)


def generate(model: GPT, prompt_ids: list[int], max_new: int,
             temperature: float = 0.0, seed: int = 0,
             use_cache: bool = True) -> list[int]:
    """Autoregressive decoding; temperature 0 is greedy, otherwise softmax
    sampling at temperature tau with the portable seeded generator."""
    if not prompt_ids:
        raise DomainError("prompt must be non-empty")
    cfg = model.cfg
    if len(prompt_ids) + max_new > cfg.max_seq:
        raise SequenceTooLong(
            f"prompt {len(prompt_ids)} + max_new {max_new} exceeds "
            f"max_seq {cfg.max_seq}"
        )
    rng = Rng(seed)
    out = list(prompt_ids)
    with no_grad():
        cache = new_cache(cfg) if use_cache else None
        pending = list(prompt_ids)  # ids not yet fed to the model
        for _ in range(max_new):
            if use_cache:
                ids = Tensor._wrap(np.asarray([pending], dtype=np.int64),
                                   DType.INT64)
                logits = model.forward(ids, cache=cache)
                pending = []
            else:
                ids = Tensor._wrap(np.asarray([out], dtype=np.int64),
                                   DType.INT64)
                logits = model.forward(ids)
            last = logits.nd[0, -1]
            nxt = _pick(last, temperature, rng)
            out.append(nxt)
            pending.append(nxt)
    return out[len(prompt_ids):]


def _pick(logits_row: np.ndarray, temperature: float, rng: Rng) -> int:
    if temperature <= 0.0:
        return int(np.argmax(logits_row))
    z = logits_row.astype(np.float64) / temperature
    z -= z.max()
    p = np.exp(z)
    p /= p.sum()
    u = rng.uniform()
    return int(min(np.searchsorted(np.cumsum(p), u), len(p) - 1))
