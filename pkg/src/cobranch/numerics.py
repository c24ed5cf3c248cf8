"""Dense float64 helpers shared by every other module.

Matrices are plain C-order float64 numpy arrays.  Prediction matrices use the
K x N layout: one column per sample, columns summing to 1.  All randomness goes
through explicit generators created by :func:`seeded_rng`; nothing touches the
global numpy state.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

Array = np.ndarray


def seeded_rng(seed: int) -> np.random.Generator:
    """PCG64 generator: identical seeds give identical draws on every platform."""
    return np.random.Generator(np.random.PCG64(seed))


def derived_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for a named sub-stream of a run seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(stream))))


def softmax_columns(m: Array) -> Array:
    """Column-wise softmax of a K x N score matrix.

    Each column of the result sums to 1; shifting a column by a constant does
    not change the output (the per-column max is subtracted internally).
    """
    m = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise ValueError("non-finite scores")
    shifted = m - m.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=0, keepdims=True)
    # keep entries strictly inside (0, 1); the shift is at most one ulp
    return np.clip(out, 1e-300, np.nextafter(1.0, 0.0))


def cosine_similarity(a: Array, b: Array) -> float:
    """Cosine of the angle between two nonzero vectors, clipped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("degenerate feature")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def l2_normalize_rows(x: Array) -> Array:
    """Scale every row of ``x`` to unit Euclidean norm."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("degenerate feature")
    return x / norms


def check_gradient(
    f: Callable[[Array], float],
    grad_f: Callable[[Array], Array],
    x: Array,
    h: float = 1e-5,
) -> float:
    """Max relative error between ``grad_f`` and central differences of ``f``.

    The error at coordinate i is |analytic_i - fd_i| / max(1, |fd_i|); the
    maximum over coordinates is returned.
    """
    x = np.asarray(x, dtype=np.float64)
    analytic = np.asarray(grad_f(x), dtype=np.float64)
    if analytic.shape != x.shape:
        raise ValueError("gradient shape mismatch")
    worst = 0.0
    for i in range(x.size):
        step = np.zeros_like(x)
        step.flat[i] = h
        fd = (f(x + step) - f(x - step)) / (2.0 * h)
        err = abs(analytic.flat[i] - fd) / max(1.0, abs(fd))
        worst = max(worst, err)
    return worst
