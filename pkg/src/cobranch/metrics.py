"""Clustering quality measures: matching accuracy, NMI, ARI, and label-histogram entropy.

All four are invariant to permuting predicted cluster ids.  Entropies use
natural logarithms throughout.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .numerics import Array


def contingency_table(pred: Array, true: Array) -> Array:
    """K_pred x K_true matrix of co-occurrence counts."""
    pred = np.asarray(pred, dtype=np.int64)
    true = np.asarray(true, dtype=np.int64)
    if pred.shape != true.shape or pred.ndim != 1:
        raise ValueError("label vectors must be 1-D and equal length")
    if pred.size == 0:
        raise ValueError("empty input")
    pred_ids, pred_idx = np.unique(pred, return_inverse=True)
    true_ids, true_idx = np.unique(true, return_inverse=True)
    table = np.zeros((pred_ids.size, true_ids.size), dtype=np.int64)
    np.add.at(table, (pred_idx, true_idx), 1)
    return table


def clustering_accuracy(pred: Array, true: Array) -> float:
    """Fraction of samples correct under the best one-to-one cluster-to-class matching.

    The matching is solved on the contingency table by the Hungarian method;
    a rectangular table behaves as if padded with zero-count rows or columns.
    """
    table = contingency_table(pred, true)
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum()) / float(table.sum())


def _entropy(counts: Array) -> float:
    p = counts[counts > 0].astype(np.float64)
    p /= p.sum()
    return float(-(p * np.log(p)).sum())


def nmi(pred: Array, true: Array, average: str = "arithmetic") -> float:
    """Mutual information normalized by the mean of the two label entropies.

    average selects the mean: "arithmetic" (default) or "geometric".  Two
    constant partitions are identical, so the degenerate 0/0 case is 1.0.
    """
    if average not in ("arithmetic", "geometric"):
        raise ValueError("average must be 'arithmetic' or 'geometric'")
    table = contingency_table(pred, true).astype(np.float64)
    n = table.sum()
    h_pred = _entropy(table.sum(axis=1))
    h_true = _entropy(table.sum(axis=0))
    if h_pred == 0.0 and h_true == 0.0:
        return 1.0
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))
    nz = table > 0
    mi = float((table[nz] / n * np.log(table[nz] * n / outer[nz])).sum())
    if average == "arithmetic":
        denom = 0.5 * (h_pred + h_true)
    else:
        denom = np.sqrt(h_pred * h_true)
    if denom == 0.0:
        return 0.0
    return max(0.0, mi / denom)


def ari(pred: Array, true: Array) -> float:
    """Adjusted Rand index from the pair-counting closed form."""
    pred = np.asarray(pred, dtype=np.int64)
    if pred.size < 2:
        raise ValueError("need at least 2 samples")
    table = contingency_table(pred, true).astype(np.float64)
    n = table.sum()

    def choose2(x: Array) -> float:
        return float((x * (x - 1) / 2.0).sum())

    sum_cells = choose2(table)
    sum_rows = choose2(table.sum(axis=1))
    sum_cols = choose2(table.sum(axis=0))
    total = n * (n - 1) / 2.0
    expected = sum_rows * sum_cols / total
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0
    return (sum_cells - expected) / (max_index - expected)


def uniformity(labels: Array, k: int) -> float:
    """Shannon entropy (natural log) of the cluster-size histogram; max is ln k."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("empty input")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError("labels out of range")
    counts = np.bincount(labels, minlength=k)
    return _entropy(counts)
