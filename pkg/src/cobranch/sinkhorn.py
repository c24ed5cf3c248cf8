"""Balanced soft assignment of N samples to K clusters.

Given a column-stochastic prediction matrix P (K x N), find the nonnegative
Q (K x N) closest to P in cross-entropy among matrices whose columns sum to 1
and whose rows sum to N/K, i.e. every cluster receives the same mass.  The
entropically regularized problem has the closed form

    Q = N * diag(u) (P/N)^xi diag(v)

and u, v are found by alternating matrix scaling (Sinkhorn-Knopp).  The
iteration runs in the log domain by default because (P/N)^xi underflows for
confident predictions at the default sharpness xi = 10.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Array

_CLAMP = 1e-30


@dataclass(frozen=True)
class TransportConfig:
    """Knobs of the scaling iteration.

    xi: sharpness of the regularization; larger values track the prediction
        argmax more closely.
    tol: maximum allowed marginal violation of the returned assignment.
    """

    xi: float = 10.0
    max_iters: int = 1000
    tol: float = 1e-6
    log_domain: bool = True

    def __post_init__(self) -> None:
        if self.xi <= 0.0:
            raise ValueError("xi must be positive")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class SoftAssignment:
    """Scaled assignment matrix plus convergence diagnostics.

    q is K x N nonnegative with column sums ~1 and row sums ~N/K; the marginal
    errors record the worst violation actually achieved.
    """

    q: Array
    row_marginal_err: float
    col_marginal_err: float
    iters_used: int
    converged: bool


def _validate_predictions(p_hat: Array) -> Array:
    p = np.asarray(p_hat, dtype=np.float64)
    if p.ndim != 2:
        raise ValueError("prediction matrix must be 2-D")
    if not np.all(np.isfinite(p)):
        raise ValueError("non-finite predictions")
    k, n = p.shape
    if k > n:
        raise ValueError("more clusters than samples")
    if np.max(np.abs(p.sum(axis=0) - 1.0)) > 1e-6:
        raise ValueError("columns must sum to 1")
    return p


def _marginal_errors(q: Array) -> tuple[float, float]:
    k, n = q.shape
    row_err = float(np.max(np.abs(q.sum(axis=1) - n / k)))
    col_err = float(np.max(np.abs(q.sum(axis=0) - 1.0)))
    return row_err, col_err


def _logsumexp(a: Array, axis: int) -> Array:
    m = a.max(axis=axis)
    return m + np.log(np.exp(a - np.expand_dims(m, axis)).sum(axis=axis))


def solve_balanced(p_hat: Array, cfg: TransportConfig | None = None) -> SoftAssignment:
    """Solve the balanced assignment problem for a K x N prediction matrix.

    Entries of p_hat are clamped below at 1e-30 before the xi power so the
    implied cost matrix stays finite.  Iterates until both marginal violations
    of Q fall below cfg.tol, or max_iters is reached (converged=False then).
    Deterministic: no randomness is involved.
    """
    cfg = cfg or TransportConfig()
    p = _validate_predictions(p_hat)
    k, n = p.shape
    if cfg.log_domain:
        return _solve_log(p, cfg)
    return _solve_linear(p, cfg)


def _solve_log(p: Array, cfg: TransportConfig) -> SoftAssignment:
    k, n = p.shape
    # log of (P/N)^xi; the scaled matrix S targets row sums 1/K, column sums 1/N
    log_t = cfg.xi * (np.log(np.maximum(p, _CLAMP)) - np.log(n))
    log_r = -np.log(k)
    log_c = -np.log(n)
    ln_v = np.full(n, log_c)
    iters = 0
    converged = False
    for _ in range(cfg.max_iters):
        iters += 1
        ln_u = log_r - _logsumexp(log_t + ln_v[None, :], axis=1)
        # after the u update row sums are exact; check columns before touching v
        col_lse = _logsumexp(log_t + ln_u[:, None], axis=0)
        col_err = float(np.max(np.abs(n * np.exp(ln_v + col_lse) - 1.0)))
        if col_err <= cfg.tol:
            converged = True
            break
        ln_v = log_c - col_lse
    q = n * np.exp(log_t + ln_u[:, None] + ln_v[None, :])
    row_err, col_err = _marginal_errors(q)
    converged = row_err <= cfg.tol and col_err <= cfg.tol
    return SoftAssignment(q, row_err, col_err, iters, converged)


def _solve_linear(p: Array, cfg: TransportConfig) -> SoftAssignment:
    # plain-domain cross-check path; underflows for very confident predictions
    k, n = p.shape
    t_pow = np.power(np.maximum(p, _CLAMP) / n, cfg.xi)
    r = 1.0 / k
    c = 1.0 / n
    v = np.full(n, c)
    iters = 0
    converged = False
    for _ in range(cfg.max_iters):
        iters += 1
        u = r / (t_pow @ v)
        col_mass = t_pow.T @ u
        col_err = float(np.max(np.abs(n * v * col_mass - 1.0)))
        if col_err <= cfg.tol:
            converged = True
            break
        v = c / col_mass
    q = n * (u[:, None] * t_pow * v[None, :])
    if not np.all(np.isfinite(q)):
        raise FloatingPointError("linear-domain iteration overflowed; use log_domain")
    row_err, col_err = _marginal_errors(q)
    converged = row_err <= cfg.tol and col_err <= cfg.tol
    return SoftAssignment(q, row_err, col_err, iters, converged)


def round_to_labels(q: SoftAssignment, respect_capacity: bool = False) -> Array:
    """Integral labels from a soft assignment.

    respect_capacity=False: per-column argmax, ties to the lowest row index.
    respect_capacity=True: greedy assignment where each cluster takes at most
    ceil(N/K) samples; samples are processed in descending order of their best
    column value and fall back to their next-best cluster with spare capacity.
    """
    m = q.q
    k, n = m.shape
    if not respect_capacity:
        return np.argmax(m, axis=0)
    cap = -(-n // k)
    order = np.argsort(-m.max(axis=0), kind="stable")
    counts = np.zeros(k, dtype=np.int64)
    labels = np.full(n, -1, dtype=np.int64)
    for col in order:
        for row in np.argsort(-m[:, col], kind="stable"):
            if counts[row] < cap:
                labels[col] = row
                counts[row] += 1
                break
    return labels


def argmax_labels(p_hat: Array) -> Array:
    """Per-column argmax labels of a column-stochastic matrix (ties to lowest index)."""
    p = np.asarray(p_hat, dtype=np.float64)
    return np.argmax(p, axis=0)
