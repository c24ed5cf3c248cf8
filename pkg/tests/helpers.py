"""Brute-force oracles shared across the test suite.

These deliberately re-derive quantities by enumeration or direct counting and
never call the code paths they check.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def balanced_assignments(n: int, k: int):
    """Yield every label vector of length n with exactly n/k samples per cluster."""
    assert n % k == 0
    per = n // k
    base = [c for c in range(k) for _ in range(per)]
    seen = set()
    for perm in itertools.permutations(base):
        if perm not in seen:
            seen.add(perm)
            yield np.array(perm, dtype=np.int64)


def assignment_cross_entropy(labels: np.ndarray, p_hat: np.ndarray) -> float:
    """E(Q||P) for a one-hot assignment: mean over samples of -ln p_hat[label, n]."""
    n = labels.size
    return -sum(math.log(p_hat[labels[i], i]) for i in range(n)) / n


def best_balanced_cross_entropy(p_hat: np.ndarray) -> tuple[float, np.ndarray]:
    k, n = p_hat.shape
    best_val, best_labels = math.inf, None
    for labels in balanced_assignments(n, k):
        val = assignment_cross_entropy(labels, p_hat)
        if val < best_val:
            best_val, best_labels = val, labels
    return best_val, best_labels


def exhaustive_accuracy(pred: np.ndarray, true: np.ndarray) -> float:
    """Best one-to-one cluster matching by trying every injection."""
    pred_ids = sorted(set(int(v) for v in pred))
    true_ids = sorted(set(int(v) for v in true))
    small, large, pred_side = (pred_ids, true_ids, True) if len(pred_ids) <= len(true_ids) else (true_ids, pred_ids, False)
    best = 0
    for image in itertools.permutations(large, len(small)):
        mapping = dict(zip(small, image))
        if pred_side:
            hits = sum(1 for p, t in zip(pred, true) if mapping[int(p)] == int(t))
        else:
            hits = sum(1 for p, t in zip(pred, true) if mapping[int(t)] == int(p))
        best = max(best, hits)
    return best / pred.size


def pairwise_rand_counts(pred: np.ndarray, true: np.ndarray) -> tuple[int, int, int, int]:
    """(a, b, c, d) pair counts over all unordered sample pairs."""
    a = b = c = d = 0
    n = pred.size
    for i in range(n):
        for j in range(i + 1, n):
            same_p = pred[i] == pred[j]
            same_t = true[i] == true[j]
            if same_p and same_t:
                a += 1
            elif same_p and not same_t:
                b += 1
            elif not same_p and same_t:
                c += 1
            else:
                d += 1
    return a, b, c, d


def ari_from_pairs(pred: np.ndarray, true: np.ndarray) -> float:
    """Adjusted Rand index straight from pair counting."""
    a, b, c, d = pairwise_rand_counts(pred, true)
    total = a + b + c + d
    expected = (a + b) * (a + c) / total
    max_index = 0.5 * ((a + b) + (a + c))
    if max_index == expected:
        return 1.0
    return (a - expected) / (max_index - expected)


def best_spherical_partition(points: np.ndarray, k: int) -> float:
    """Max total cosine objective over every partition into at most k groups."""
    x = points / np.linalg.norm(points, axis=1, keepdims=True)
    n = x.shape[0]
    best = -math.inf
    for labels in itertools.product(range(k), repeat=n):
        total = 0.0
        for c in range(k):
            members = x[[i for i in range(n) if labels[i] == c]]
            if members.shape[0] == 0:
                continue
            mean = members.mean(axis=0)
            norm = np.linalg.norm(mean)
            if norm == 0.0:
                continue
            total += float((members @ (mean / norm)).sum())
        best = max(best, total)
    return best
