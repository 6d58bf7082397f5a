"""Magnitude pruning and the distillation training objective."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _graph
from .errors import DomainError
from .nn import cross_entropy_loss
from .tensor import Tensor


@dataclass
class PruneResult:
    mask: Tensor              # 0/1 Float32, same shape as the input
    pruned: Tensor
    achieved_sparsity: float


def magnitude_prune(t: Tensor, sparsity: float) -> PruneResult:
    """Zero the floor(sparsity * count) smallest-magnitude elements; ties
    resolved by index order (stable sort)."""
    if not 0.0 <= sparsity <= 1.0:
        raise DomainError("sparsity must lie in [0, 1]")
    count = t.size
    k = int(sparsity * count)
    order = np.argsort(np.abs(t.data), kind="stable")
    mask = np.ones(count, dtype=np.float32)
    mask[order[:k]] = 0.0
    pruned = t.data * mask
    return PruneResult(
        mask=Tensor._wrap(mask.reshape(t.shape)),
        pruned=Tensor._wrap(pruned.reshape(t.shape)),
        achieved_sparsity=k / count if count else 0.0,
    )


def _kl_term(student: Tensor, teacher: Tensor, temperature: float) -> Tensor:
    """tau^2 * KL(softmax(teacher/tau) || softmax(student/tau)), batch mean."""
    tau = temperature
    sn = student.nd / tau
    tn = teacher.nd / tau
    log_ps = sn - _logsumexp(sn)
    log_pt = tn - _logsumexp(tn)
    pt = np.exp(log_pt)
    kl_rows = (pt * (log_pt - log_ps)).sum(axis=1)
    value = tau * tau * kl_rows.mean()
    result = Tensor._wrap(np.asarray(value, dtype=np.float32))
    if _graph.should_record((student, teacher)):
        ps_t = Tensor._wrap(np.exp(log_ps).astype(np.float32))
        pt_t = Tensor._wrap(pt.astype(np.float32))
        batch = student.shape[0]

        def backward(g):
            scale = g.reshape(())[()] * tau / batch
            ps = ps_t.nd.astype(np.float64)
            ptn = pt_t.nd.astype(np.float64)
            d_student = scale * (ps - ptn)
            diff = np.log(np.maximum(ptn, 1e-30)) - np.log(np.maximum(ps, 1e-30))
            row_mean = (ptn * diff).sum(axis=1, keepdims=True)
            d_teacher = scale * ptn * (diff - row_mean)
            return (d_student.astype(np.float32),
                    d_teacher.astype(np.float32))

        result.requires_grad = True
        result.node = _graph.Node("distill_kl", (student, teacher),
                                  (ps_t, pt_t), backward)
    return result


def _logsumexp(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1, keepdims=True)
    return m + np.log(np.exp(x - m).sum(axis=1, keepdims=True))


def distillation_loss(student_logits: Tensor, teacher_logits: Tensor,
                      temperature: float, mix: float,
                      hard_targets: Optional[Tensor] = None) -> Tensor:
    """mix * CE(student, hard) + (1 - mix) * tau^2 * KL(teacher || student)."""
    if temperature <= 0.0:
        raise DomainError("temperature must be positive")
    if not 0.0 <= mix <= 1.0:
        raise DomainError("mix must lie in [0, 1]")
    if mix > 0.0 and hard_targets is None:
        raise DomainError("hard_targets required when mix > 0")
    if mix >= 1.0:
        return cross_entropy_loss(student_logits, hard_targets)
    soft = _kl_term(student_logits, teacher_logits, temperature)
    if mix <= 0.0:
        return soft
    hard = cross_entropy_loss(student_logits, hard_targets)
    return hard * mix + soft * (1.0 - mix)
