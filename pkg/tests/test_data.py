import numpy as np
import pytest

from cobranch.data import (
    AugmentConfig,
    SynthConfig,
    augment,
    generate,
    load_bundle,
    save_bundle,
    shared_view,
)
from cobranch.metrics import clustering_accuracy
from cobranch.model import spherical_kmeans
from cobranch.numerics import cosine_similarity, l2_normalize_rows, seeded_rng


def test_generate_deterministic_per_seed():
    cfg = SynthConfig(seed=5)
    a = generate(cfg)
    b = generate(cfg)
    assert np.array_equal(a.source_x, b.source_x)
    assert np.array_equal(a.target_y, b.target_y)
    c = generate(SynthConfig(seed=6))
    assert not np.array_equal(a.source_x, c.source_x)


def test_label_ranges_disjoint():
    bundle = generate(SynthConfig(k_source=4, k_target=3, seed=1))
    assert set(np.unique(bundle.source_y)) == set(range(4))
    assert set(np.unique(bundle.target_y)) == set(range(4, 7))


def test_zero_style_gap_matches_source_style():
    cfg = SynthConfig(style_rotation_angle=0.0, style_scale=1.0, noise_sigma=0.0, seed=2)
    bundle = generate(cfg)
    # with no noise and identity style, every sample sits exactly on its class mean
    for x, y in [(bundle.source_x, bundle.source_y), (bundle.target_x, bundle.target_y)]:
        for label in np.unique(y):
            rows = x[y == label]
            assert np.allclose(rows, rows[0], atol=1e-12)


def test_balanced_sizes_when_imbalance_zero():
    bundle = generate(SynthConfig(k_target=7, n_target=300, class_imbalance=0.0, seed=3))
    counts = np.bincount(bundle.target_y - bundle.k_source, minlength=7)
    assert counts.max() - counts.min() <= 1
    assert counts.sum() == 300


def test_imbalance_tilts_sizes():
    bundle = generate(SynthConfig(k_target=5, n_target=500, class_imbalance=0.4, seed=3))
    counts = np.bincount(bundle.target_y - bundle.k_source, minlength=5)
    assert np.all(np.diff(counts) <= 0)
    assert counts[0] > counts[-1]


def test_well_separated_target_clusters_recoverable_by_kmeans():
    cfg = SynthConfig(k_target=3, n_target=300, noise_sigma=0.08, latent_dim=10, seed=9)
    bundle = generate(cfg)
    rng = seeded_rng(0)
    _, labels = spherical_kmeans(l2_normalize_rows(bundle.target_x), 3, rng, restarts=5)
    assert clustering_accuracy(labels, bundle.target_y) >= 0.95


def test_generate_rejects_more_classes_than_samples():
    with pytest.raises(ValueError):
        SynthConfig(k_target=10, n_target=5)


def test_augment_identity_when_all_zero():
    x = np.linspace(-1.0, 1.0, 25)
    cfg = AugmentConfig(kind="strong", affine_amplitude=0.0, jitter_scale=0.0, mask_prob=0.0)
    out = augment(x, cfg, seeded_rng(0))
    assert np.array_equal(out, x)


def test_augment_mask_prob_one_zeroes_everything():
    x = np.ones(25)
    cfg = AugmentConfig(kind="strong", affine_amplitude=0.0, jitter_scale=0.0, mask_prob=1.0)
    out = augment(x, cfg, seeded_rng(0))
    assert np.array_equal(out, np.zeros(25))


def test_augment_golden_regression():
    x = np.arange(5, dtype=np.float64)
    cfg = AugmentConfig(kind="weak", affine_amplitude=0.5, jitter_scale=0.1, mask_prob=0.0)
    out = augment(x, cfg, seeded_rng(42))
    golden = np.array(
        [-0.20296864937396075, 0.8381895858743483, 2.6878827730634494, 3.350642394232055, 5.424444116242276]
    )
    assert np.allclose(out, golden, atol=1e-15)


def test_weak_preserves_direction_better_than_strong():
    rng = seeded_rng(123)
    weak_cfg = AugmentConfig.weak()
    strong_cfg = AugmentConfig.strong()
    weak_cos, strong_cos = [], []
    for _ in range(1000):
        x = rng.standard_normal(25)
        weak_cos.append(cosine_similarity(x, augment(x, weak_cfg, rng)))
        xs = augment(x, strong_cfg, rng)
        strong_cos.append(cosine_similarity(x, xs) if np.linalg.norm(xs) > 0 else 0.0)
    assert np.mean(weak_cos) > np.mean(strong_cos)


def test_shared_view_truncates():
    x = np.arange(6, dtype=np.float64)
    assert np.array_equal(shared_view(x, 6), x)
    assert np.array_equal(shared_view(x, 2), x[:2])
    batch = np.arange(12, dtype=np.float64).reshape(2, 6)
    assert shared_view(batch, 3).shape == (2, 3)


def test_shared_view_rejects_bad_widths():
    x = np.arange(4, dtype=np.float64)
    with pytest.raises(ValueError, match="empty shared view"):
        shared_view(x, 0)
    with pytest.raises(ValueError):
        shared_view(x, 5)


def test_bundle_round_trip(tmp_path):
    cfg = SynthConfig(n_source=40, n_target=30, k_source=3, k_target=2, seed=8)
    bundle = generate(cfg)
    save_bundle(bundle, tmp_path, cfg)
    loaded = load_bundle(tmp_path)
    assert np.array_equal(loaded.source_x, bundle.source_x)
    assert np.array_equal(loaded.source_y, bundle.source_y)
    assert np.array_equal(loaded.target_x, bundle.target_x)
    assert np.array_equal(loaded.target_y, bundle.target_y)
    assert loaded.k_source == 3 and loaded.k_target == 2
    assert loaded.shared_dims == bundle.shared_dims
    text = (tmp_path / "data.txt").read_text()
    assert " ? " in text and "source" in text
