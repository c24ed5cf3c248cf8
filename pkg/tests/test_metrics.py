import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cobranch.metrics import ari, clustering_accuracy, nmi, uniformity
from cobranch.numerics import seeded_rng

from helpers import ari_from_pairs, exhaustive_accuracy

labels_pair = st.integers(2, 12).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 4), min_size=n, max_size=n),
        st.lists(st.integers(0, 4), min_size=n, max_size=n),
    )
)


def test_accuracy_identical():
    y = np.array([0, 1, 2, 1, 0])
    assert clustering_accuracy(y, y) == 1.0


def test_accuracy_relabeling_invariant():
    true = np.array([0, 0, 1, 1, 2, 2])
    pred = np.array([2, 2, 0, 0, 1, 1])
    assert clustering_accuracy(pred, true) == 1.0


def test_accuracy_rectangular_case():
    pred = np.array([0, 0, 1, 1])
    true = np.array([1, 1, 0, 2])
    assert clustering_accuracy(pred, true) == pytest.approx(0.75)


def test_accuracy_empty_rejected():
    with pytest.raises(ValueError):
        clustering_accuracy(np.array([]), np.array([]))


@given(labels_pair)
@settings(max_examples=60)
def test_accuracy_matches_exhaustive_matching(pair):
    pred, true = np.array(pair[0]), np.array(pair[1])
    assert clustering_accuracy(pred, true) == pytest.approx(exhaustive_accuracy(pred, true))


@given(labels_pair, st.permutations(list(range(5))))
@settings(max_examples=40)
def test_metrics_invariant_to_cluster_relabeling(pair, perm):
    pred, true = np.array(pair[0]), np.array(pair[1])
    relabeled = np.array([perm[p] for p in pred])
    assert clustering_accuracy(relabeled, true) == pytest.approx(clustering_accuracy(pred, true))
    assert nmi(relabeled, true) == pytest.approx(nmi(pred, true))
    assert ari(relabeled, true) == pytest.approx(ari(pred, true))


def test_nmi_identical_partitions():
    assert nmi(np.array([0, 0, 1, 1]), np.array([1, 1, 0, 0])) == pytest.approx(1.0)


def test_nmi_constant_prediction_zero():
    assert nmi(np.array([0, 0, 0, 0]), np.array([0, 1, 0, 1])) == 0.0


def test_nmi_both_constant_is_one():
    assert nmi(np.array([0, 0, 0]), np.array([2, 2, 2])) == 1.0


def test_nmi_independent_partitions_zero():
    assert nmi(np.array([0, 0, 1, 1]), np.array([0, 1, 0, 1])) == pytest.approx(0.0, abs=1e-12)


def test_nmi_geometric_switch():
    pred = np.array([0, 0, 1, 2])
    true = np.array([0, 1, 1, 1])
    assert nmi(pred, true, average="geometric") != pytest.approx(nmi(pred, true))
    with pytest.raises(ValueError):
        nmi(pred, true, average="harmonic")


def test_ari_identical():
    y = np.array([0, 1, 1, 2])
    assert ari(y, y) == pytest.approx(1.0)


def test_ari_both_constant():
    assert ari(np.array([0, 0, 0]), np.array([1, 1, 1])) == 1.0


def test_ari_derived_case_matches_pair_oracle():
    pred = np.array([0, 0, 1, 1])
    true = np.array([0, 0, 0, 1])
    assert ari(pred, true) == pytest.approx(ari_from_pairs(pred, true))


def test_ari_needs_two_samples():
    with pytest.raises(ValueError):
        ari(np.array([0]), np.array([0]))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.integers(2, 30))
def test_ari_closed_form_equals_pair_counting(seed, n):
    rng = seeded_rng(seed)
    pred = rng.integers(0, 4, size=n)
    true = rng.integers(0, 3, size=n)
    if len(set(pred.tolist())) == 1 and len(set(true.tolist())) == 1:
        return
    assert ari(pred, true) == pytest.approx(ari_from_pairs(pred, true), abs=1e-12)


def test_uniformity_anchor_51_equal_clusters():
    labels = np.repeat(np.arange(51), 10)
    value = uniformity(labels, 51)
    assert value == pytest.approx(math.log(51))
    assert abs(value - 3.93) <= 0.005


def test_uniformity_single_cluster():
    assert uniformity(np.zeros(10, dtype=int), 4) == 0.0


def test_uniformity_two_equal_clusters():
    assert uniformity(np.array([0, 0, 1, 1]), 2) == pytest.approx(math.log(2))


def test_uniformity_range_checked():
    with pytest.raises(ValueError):
        uniformity(np.array([0, 3]), 2)
