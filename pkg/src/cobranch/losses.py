"""Training losses with hand-derived gradients.

Every public loss returns a :class:`LossValue` carrying the scalar and the
gradient with respect to the loss's differentiable input (logits, features, or
probabilities); chaining into model parameters is the trainer's job.  Logits
and probabilities here are row-major (one sample per row).  Logarithms of raw
probabilities are floored at 1e-12.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Array
from .pseudo_label import MemoryBank

_LOG_FLOOR = 1e-12


@dataclass
class LossValue:
    value: float
    grad: Array


def softmax_rows(logits: Array) -> Array:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_vjp(probs: Array, d_probs: Array) -> Array:
    """Pull a probability gradient back through a row-wise softmax."""
    inner = (d_probs * probs).sum(axis=1, keepdims=True)
    return probs * (d_probs - inner)


def _log_softmax_rows(logits: Array) -> Array:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _cross_entropy(logits: Array, labels: Array) -> LossValue:
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ValueError("labels must be one per row")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError("label out of range")
    logp = _log_softmax_rows(logits)
    value = float(-logp[np.arange(n), labels].mean())
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return LossValue(value, grad / n)


def supervised_ce(logits: Array, labels: Array) -> LossValue:
    """Mean cross entropy of row softmax against integer class labels."""
    return _cross_entropy(logits, labels)


def ocm_ce(student_logits_strong: Array, pseudo_labels: Array) -> LossValue:
    """Cross entropy of the student's strong-view logits against teacher pseudo labels.

    One branch's term; the training objective sums the two branches.
    """
    return _cross_entropy(student_logits_strong, pseudo_labels)


def reconstruction_mse(recon: Array, target: Array) -> LossValue:
    """Mean squared element-wise error of one reconstruction batch."""
    recon = np.asarray(recon, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if recon.shape != target.shape:
        raise ValueError("shape mismatch")
    diff = recon - target
    return LossValue(float((diff**2).mean()), 2.0 * diff / diff.size)


def contrastive(z: Array, indices: Array, bank: MemoryBank, rho: float) -> LossValue:
    """Instance-discrimination loss of student features against the teacher bank.

    The positive for row i is the bank slot indices[i] (which must hold that
    sample's current teacher feature); every slot is a candidate in the
    denominator.  Similarities are rho * cosine, so the loss is invariant to
    positive rescaling of any feature row.  Gradients flow to z only.
    """
    z = np.asarray(z, dtype=np.float64)
    indices = np.asarray(indices, dtype=np.int64)
    if not bool(bank.populated.all()):
        raise ValueError("bank cold")
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("degenerate feature")
    n = z.shape[0]
    unit = z / norms
    bank_feats = bank.features
    cos = unit @ bank_feats.T  # n x N_t
    scores = rho * cos
    shifted = scores - scores.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    value = float(-logp[np.arange(n), indices].mean())
    coeff = np.exp(logp)
    coeff[np.arange(n), indices] -= 1.0
    coeff *= rho / n
    # d cos(z_i, m)/dz_i = (m - cos * unit_i) / |z_i|
    grad = (coeff @ bank_feats - (coeff * cos).sum(axis=1, keepdims=True) * unit) / norms
    return LossValue(value, grad)


def pairwise_labels(labels: Array) -> Array:
    """Binary same-cluster matrix: symmetric, ones on the diagonal."""
    labels = np.asarray(labels, dtype=np.int64)
    return (labels[:, None] == labels[None, :]).astype(np.float64)


def ccm_loss(probs: Array, g: Array) -> LossValue:
    """One directional co-training term: predicted pair similarities vs. the
    other branch's pairwise labels.

    probs are row softmax outputs (n x K); the pair similarity is the inner
    product of two rows, row-normalized before the log.  Value is nonnegative
    and zero only when every positive pair's normalized similarity is 1.
    Gradients flow through probs; g is constant.
    """
    probs = np.asarray(probs, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    n = probs.shape[0]
    if n < 2:
        raise ValueError("need at least 2 samples")
    if g.shape != (n, n):
        raise ValueError("pairwise label shape mismatch")
    pair = np.maximum(probs @ probs.T, _LOG_FLOOR)
    row_sum = pair.sum(axis=1, keepdims=True)
    pair_norm = pair / row_sum
    g_count = g.sum(axis=1, keepdims=True)
    value = float(-((g * np.log(np.maximum(pair_norm, _LOG_FLOOR))).sum(axis=1, keepdims=True) / g_count).mean())
    d_pair = -(g / (g_count * pair) - 1.0 / row_sum) / n
    grad = (d_pair + d_pair.T) @ probs
    return LossValue(value, grad)


def kl_decomposition(q: Array, p: Array) -> tuple[float, float, float]:
    """Split the averaged KL of column-stochastic K x N matrices.

    Returns (D, E, H) with D = KL(q||p), E the cross-entropy term, H the
    entropy of q, satisfying D = E - H; for one-hot q, H is exactly 0.
    """
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if q.shape != p.shape:
        raise ValueError("shape mismatch")
    n = q.shape[1]
    log_q = np.log(np.maximum(q, _LOG_FLOOR))
    log_p = np.log(np.maximum(p, _LOG_FLOOR))
    d = float((q * (log_q - log_p)).sum() / n)
    e = float((-(q * log_p)).sum() / n)
    h = float((-(q * log_q)).sum() / n)
    return d, e, h
