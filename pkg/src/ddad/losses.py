"""Loss functions for data-driven and data-free distillation.

All losses return scalar tensors and are differentiable with respect to
whatever inputs still carry gradients. Callers detach the players that must
stay fixed (the teacher always, the student while training the generator).
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .batchnorm import BNLayerRecord
from .errors import ShapeError, StaleStatisticsError
from .tensor import Tensor, as_tensor, log, log_softmax, mean, softmax, tabs

softmax_with_temperature = softmax


def _same_shape(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {a.shape} and {b.shape} differ")


def cross_entropy(logits: Tensor, labels) -> Tensor:
    labels = np.asarray(labels).astype(np.int64).reshape(-1)
    n, k = logits.shape
    if labels.shape[0] != n:
        raise ShapeError(f"cross_entropy: {labels.shape[0]} labels for {n} rows")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ValueError(f"labels must lie in [0, {k}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    return -(log_softmax(logits) * onehot).sum() / n


def soft_kl(teacher_logits: Tensor, student_logits: Tensor, tau: float = 1.0) -> Tensor:
    """Batch-mean KL(softmax(t/tau) || softmax(s/tau)); teacher side is constant."""
    _same_shape(teacher_logits, student_logits, "soft_kl")
    t = as_tensor(teacher_logits).detach()
    log_pt = log_softmax(t, tau).data
    pt = np.exp(log_pt)
    log_ps = log_softmax(student_logits, tau)
    n = student_logits.shape[0]
    return ((pt * log_pt).sum() - (log_ps * pt).sum()) / n


def kd_loss(student_logits: Tensor, teacher_logits: Tensor, labels, tau: float = 1.0,
            lam: float = 1.0) -> Tensor:
    """Cross-entropy on hard labels plus ``lam`` times the softened KL term.

    Only meaningful with labelled data, i.e. for the data-driven baseline.
    """
    ce = cross_entropy(student_logits, labels)
    if lam == 0:
        return ce
    return ce + lam * soft_kl(teacher_logits, student_logits, tau)


def gaussian_kl(mu_p, var_p, mu_q, var_q):
    """KL(N(mu_p, var_p) || N(mu_q, var_q)), elementwise; works on arrays or tensors."""
    if isinstance(var_q, Tensor) or isinstance(mu_q, Tensor):
        var_q, mu_q = as_tensor(var_q), as_tensor(mu_q)
        diff = mu_q - mu_p
        return 0.5 * log(var_q) - 0.5 * np.log(var_p) + (var_p + diff * diff) / (2.0 * var_q) - 0.5
    return 0.5 * np.log(var_q / var_p) + (var_p + (mu_p - mu_q) ** 2) / (2.0 * var_q) - 0.5


def bn_divergence_loss(records: Sequence[BNLayerRecord]) -> Tensor:
    """Statistic-matching term of the generator objective.

    For each BN layer, KL(N(stored_mean, stored_var) || N(batch_mean, batch_var))
    is summed over channels; the layer values are then averaged. Both
    variances get the layer's epsilon added, the same one used for
    normalization, so a constant channel stays finite.
    """
    if not records:
        raise ValueError("bn_divergence_loss needs at least one BN record")
    total = None
    for i, rec in enumerate(records):
        if not rec.fresh:
            raise StaleStatisticsError(f"BN record {i} has no batch statistics; run a "
                                       f"training-mode forward first")
        kl = gaussian_kl(rec.stored_mean, rec.stored_var + rec.eps,
                         rec.batch_mean, rec.batch_var + rec.eps).sum()
        total = kl if total is None else total + kl
    return total / len(records)


def discrepancy_loss(teacher_probs: Tensor, student_probs: Tensor) -> Tensor:
    """Negative mean absolute difference over all N x K probability entries."""
    return -student_distill_loss(teacher_probs, student_probs)


def student_distill_loss(teacher_probs: Tensor, student_probs: Tensor) -> Tensor:
    """Mean absolute difference over all N x K probability entries."""
    _same_shape(teacher_probs, student_probs, "mae")
    return mean(tabs(teacher_probs - student_probs))


def generator_loss(bn_term: Tensor, discrepancy_term: Tensor, delta: float = 0.01,
                   gamma: float = 0.1) -> Tensor:
    if delta < 0 or gamma < 0:
        raise ValueError(f"loss weights must be nonnegative, got delta={delta}, gamma={gamma}")
    return delta * as_tensor(bn_term) + gamma * as_tensor(discrepancy_term)
