"""Synthetic two-domain data with disjoint label sets and a controllable style gap.

Both domains draw class clusters as Gaussians around unit-sphere means in a
shared latent space, embedded isometrically into the input space.  The target
domain is then pushed through its own style transform (a rotation composed
with an anisotropic scaling), which is the knob that separates "domain-shared"
from "target-specific" structure.  Augmentation stands in for the skeleton
transforms of the original setting: a random affine distortion plus Gaussian
jitter, and block masking for the strong flavour.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import Array, l2_normalize_rows, seeded_rng


@dataclass(frozen=True)
class SynthConfig:
    k_source: int = 6
    k_target: int = 8
    n_source: int = 800
    n_target: int = 800
    input_dim: int = 25
    latent_dim: int = 10
    shared_dims: int = 15
    style_rotation_angle: float = 0.0
    style_scale: float = 1.0
    noise_sigma: float = 0.1
    class_imbalance: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k_source > self.n_source or self.k_target > self.n_target:
            raise ValueError("more classes than samples")
        if not 0 <= self.shared_dims <= self.input_dim:
            raise ValueError("shared_dims must be in [0, input_dim]")
        if self.latent_dim > self.input_dim:
            raise ValueError("latent_dim must be <= input_dim")
        if not 0.0 <= self.class_imbalance <= 1.0:
            raise ValueError("class_imbalance must be in [0, 1]")


@dataclass(frozen=True)
class AugmentConfig:
    kind: str
    affine_amplitude: float
    jitter_scale: float
    mask_prob: float

    def __post_init__(self) -> None:
        if self.kind not in ("weak", "strong"):
            raise ValueError("kind must be 'weak' or 'strong'")
        if not 0.0 <= self.mask_prob <= 1.0:
            raise ValueError("mask_prob must be in [0, 1]")

    @staticmethod
    def weak() -> "AugmentConfig":
        return AugmentConfig(kind="weak", affine_amplitude=0.5, jitter_scale=1.0 / 6.0, mask_prob=0.0)

    @staticmethod
    def strong() -> "AugmentConfig":
        return AugmentConfig(kind="strong", affine_amplitude=1.0, jitter_scale=1.0 / 3.0, mask_prob=0.3)


@dataclass(frozen=True)
class DomainSample:
    x: Array
    domain: str                  # "source" | "target"
    label: int | None            # class id; None for unlabeled target lines


@dataclass
class DatasetBundle:
    """Labeled source set, unlabeled target set, and the hidden target truth.

    target_y exists only for evaluation; the training path never reads it.
    Target class ids continue after the source ids so the two label ranges
    stay disjoint.
    """

    source_x: Array
    source_y: Array
    target_x: Array
    target_y: Array
    k_source: int
    k_target: int
    shared_dims: int

    @property
    def input_dim(self) -> int:
        return int(self.target_x.shape[1])


def _tilted_sizes(n: int, k: int, imbalance: float) -> Array:
    """Split n into k class sizes with a geometric tilt; imbalance=0 is even."""
    weights = (1.0 - imbalance) ** np.arange(k, dtype=np.float64)
    if weights.sum() == 0.0:
        weights[0] = 1.0
    shares = n * weights / weights.sum()
    sizes = np.floor(shares).astype(np.int64)
    remainder = n - sizes.sum()
    order = np.argsort(-(shares - sizes), kind="stable")
    sizes[order[:remainder]] += 1
    return sizes


def _rotation_matrix(dim: int, angle: float) -> Array:
    rot = np.eye(dim)
    c, s = np.cos(angle), np.sin(angle)
    for i in range(0, dim - 1, 2):
        g = np.eye(dim)
        g[i, i] = c
        g[i + 1, i + 1] = c
        g[i, i + 1] = -s
        g[i + 1, i] = s
        rot = rot @ g
    return rot


def _style_transform(cfg: SynthConfig) -> Array:
    scales = np.linspace(1.0, cfg.style_scale, cfg.input_dim)
    return np.diag(scales) @ _rotation_matrix(cfg.input_dim, cfg.style_rotation_angle)


def generate(cfg: SynthConfig) -> DatasetBundle:
    """Draw the full two-domain bundle, deterministically for a fixed seed."""
    rng = seeded_rng(cfg.seed)
    k_all = cfg.k_source + cfg.k_target
    means = l2_normalize_rows(rng.standard_normal((k_all, cfg.latent_dim)))
    basis, _ = np.linalg.qr(rng.standard_normal((cfg.input_dim, cfg.latent_dim)))
    embed = basis.T  # latent_dim x input_dim, orthonormal rows

    def draw_domain(k: int, n: int, class_offset: int, style: Array) -> tuple[Array, Array]:
        sizes = _tilted_sizes(n, k, cfg.class_imbalance)
        labels = np.repeat(np.arange(k), sizes)
        latent = means[labels + class_offset] + cfg.noise_sigma * rng.standard_normal((n, cfg.latent_dim))
        x = latent @ embed @ style.T
        order = rng.permutation(n)
        return x[order], (labels + class_offset)[order]

    source_x, source_y = draw_domain(cfg.k_source, cfg.n_source, 0, np.eye(cfg.input_dim))
    target_x, target_y = draw_domain(cfg.k_target, cfg.n_target, cfg.k_source, _style_transform(cfg))
    return DatasetBundle(
        source_x=source_x,
        source_y=source_y,
        target_x=target_x,
        target_y=target_y,
        k_source=cfg.k_source,
        k_target=cfg.k_target,
        shared_dims=cfg.shared_dims,
    )


def augment(x: Array, cfg: AugmentConfig, rng: np.random.Generator) -> Array:
    """One augmented view of a single vector.

    Applies x + S x for a random square distortion S with entries uniform in
    +-affine_amplitude/sqrt(dim), then Gaussian jitter; the strong kind
    additionally zeroes each of 5 contiguous coordinate blocks independently
    with probability mask_prob.  All-zero amplitudes with mask_prob 0
    reproduce the input exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    d = x.shape[-1]
    amp = cfg.affine_amplitude / np.sqrt(d)
    distort = rng.uniform(-amp, amp, size=(d, d))
    out = x + distort @ x + cfg.jitter_scale * rng.standard_normal(d)
    if cfg.kind == "strong":
        keep = np.ones(d)
        for block in np.array_split(np.arange(d), min(5, d)):
            if rng.random() < cfg.mask_prob:
                keep[block] = 0.0
        out = out * keep
    return out


def augment_batch(x: Array, cfg: AugmentConfig, rng: np.random.Generator) -> Array:
    """Row-wise augmentation of a batch with batched draws (one view per row)."""
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    amp = cfg.affine_amplitude / np.sqrt(d)
    distort = rng.uniform(-amp, amp, size=(n, d, d))
    out = x + np.einsum("nij,nj->ni", distort, x) + cfg.jitter_scale * rng.standard_normal((n, d))
    if cfg.kind == "strong":
        blocks = np.array_split(np.arange(d), min(5, d))
        drop = rng.random((n, len(blocks))) < cfg.mask_prob
        keep = np.ones((n, d))
        for b, block in enumerate(blocks):
            keep[np.ix_(drop[:, b], block)] = 0.0
        out = out * keep
    return out


def shared_view(x: Array, shared_dims: int) -> Array:
    """First shared_dims coordinates of a vector or of every row of a batch."""
    x = np.asarray(x, dtype=np.float64)
    if shared_dims <= 0:
        raise ValueError("empty shared view")
    if shared_dims > x.shape[-1]:
        raise ValueError("shared view wider than input")
    return x[..., :shared_dims]


def save_bundle(bundle: DatasetBundle, out_dir: str | Path, cfg: SynthConfig | None = None) -> None:
    """Write data.txt (target labels hidden as '?'), truth.txt, and config.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "data.txt", "w") as fh:
        for row, label in zip(bundle.source_x, bundle.source_y):
            coords = " ".join(repr(float(v)) for v in row)
            fh.write(f"source {int(label)} {coords}\n")
        for row in bundle.target_x:
            coords = " ".join(repr(float(v)) for v in row)
            fh.write(f"target ? {coords}\n")
    with open(out / "truth.txt", "w") as fh:
        for i, label in enumerate(bundle.target_y):
            fh.write(f"{i} {int(label)}\n")
    meta = {
        "k_source": bundle.k_source,
        "k_target": bundle.k_target,
        "shared_dims": bundle.shared_dims,
    }
    if cfg is not None:
        meta["synth_config"] = dataclasses.asdict(cfg)
    with open(out / "config.json", "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def load_bundle(out_dir: str | Path) -> DatasetBundle:
    """Read a bundle written by :func:`save_bundle`."""
    out = Path(out_dir)
    with open(out / "config.json") as fh:
        meta = json.load(fh)
    src_x, src_y, tgt_x = [], [], []
    with open(out / "data.txt") as fh:
        for line in fh:
            parts = line.split()
            domain, label, coords = parts[0], parts[1], [float(v) for v in parts[2:]]
            if domain == "source":
                src_x.append(coords)
                src_y.append(int(label))
            else:
                tgt_x.append(coords)
    truth = np.zeros(len(tgt_x), dtype=np.int64)
    with open(out / "truth.txt") as fh:
        for line in fh:
            idx, label = line.split()
            truth[int(idx)] = int(label)
    return DatasetBundle(
        source_x=np.array(src_x, dtype=np.float64),
        source_y=np.array(src_y, dtype=np.int64),
        target_x=np.array(tgt_x, dtype=np.float64),
        target_y=truth,
        k_source=int(meta["k_source"]),
        k_target=int(meta["k_target"]),
        shared_dims=int(meta["shared_dims"]),
    )
