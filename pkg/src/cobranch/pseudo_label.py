"""Memory bank of teacher features and full-dataset pseudo-label generation.

Each branch keeps one bank slot per target sample holding the most recent
(unit-norm) teacher feature of that sample.  Labels for the whole target set
are refreshed from the bank: either the plain per-sample argmax of the teacher
classifier, or the balanced assignment solved over the transportation polytope
so every cluster receives the same number of samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ClassifierParams
from .numerics import Array, l2_normalize_rows, softmax_columns
from .sinkhorn import SoftAssignment, TransportConfig, argmax_labels, round_to_labels, solve_balanced


@dataclass
class MemoryBank:
    features: Array    # n_slots x feature_dim, unit rows once populated
    populated: Array   # bool per slot


def make_bank(n_slots: int, feature_dim: int) -> MemoryBank:
    return MemoryBank(
        features=np.zeros((n_slots, feature_dim)),
        populated=np.zeros(n_slots, dtype=bool),
    )


def bank_update(bank: MemoryBank, indices: Array, teacher_features: Array) -> MemoryBank:
    """Replace the indexed slots with (normalized) teacher features; last write wins."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= bank.features.shape[0]):
        raise IndexError("index out of range")
    bank.features[indices] = l2_normalize_rows(np.asarray(teacher_features, dtype=np.float64))
    bank.populated[indices] = True
    return bank


def bank_predictions(bank: MemoryBank, teacher_classifier: ClassifierParams) -> Array:
    """Column-stochastic K x N_t teacher predictions over every bank slot."""
    if not bool(bank.populated.all()):
        raise ValueError("bank cold")
    logits = bank.features @ teacher_classifier.w  # n_slots x K
    return softmax_columns(logits.T)


@dataclass
class OcmState:
    """Per-branch bookkeeping between label refreshes."""

    labels: Array | None = None
    q: SoftAssignment | None = None
    generation: int = 0


def generate_pseudo_labels(
    state: OcmState,
    bank: MemoryBank,
    teacher_classifier: ClassifierParams,
    mode: str,
    cfg: TransportConfig | None = None,
    respect_capacity: bool = True,
) -> Array:
    """Refresh the full-dataset label vector from the bank.

    mode="argmax" takes the per-sample maximum of the teacher predictions
    (prone to collapsing onto few clusters); mode="balanced" solves the
    equal-cluster-mass assignment and rounds it, by default under the
    ceil(N/K) per-cluster capacity.
    """
    p_hat = bank_predictions(bank, teacher_classifier)
    if mode == "argmax":
        labels = argmax_labels(p_hat)
        state.q = None
    elif mode == "balanced":
        assignment = solve_balanced(p_hat, cfg or TransportConfig())
        labels = round_to_labels(assignment, respect_capacity=respect_capacity)
        state.q = assignment
    else:
        raise ValueError("mode must be 'argmax' or 'balanced'")
    state.labels = labels
    state.generation += 1
    return labels


def write_label_dump(path: str | Path, labels_b0: Array, labels_b1: Array) -> None:
    """Per-refresh text dump: sample index, branch-0 label, branch-1 label."""
    labels_b0 = np.asarray(labels_b0, dtype=np.int64)
    labels_b1 = np.asarray(labels_b1, dtype=np.int64)
    with open(path, "w") as fh:
        for i, (a, b) in enumerate(zip(labels_b0, labels_b1)):
            fh.write(f"{i} {int(a)} {int(b)}\n")


def read_label_dump(path: str | Path) -> tuple[Array, Array]:
    rows = np.loadtxt(path, dtype=np.int64, ndmin=2)
    order = np.argsort(rows[:, 0], kind="stable")
    rows = rows[order]
    return rows[:, 1], rows[:, 2]
