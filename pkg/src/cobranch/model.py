"""Small fully-connected encoder/classifier/decoder with hand-written backward passes,
plus spherical k-means and parameter utilities (EMA, SGD momentum, checkpoints).

Batches are row-major (one sample per row).  Forward functions come in pairs:
``*_forward`` returns (output, cache) and ``*_backward`` consumes the cache and
the output gradient, returning parameter gradients in a container of the same
dataclass type plus the input gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .numerics import Array, l2_normalize_rows

CHECKPOINT_MAGIC = b"COBRANCH-PARAMS-1\n"


@dataclass
class EncoderParams:
    w1: Array  # input_dim x hidden_dim
    b1: Array
    w2: Array  # hidden_dim x feature_dim
    b2: Array


@dataclass
class ClassifierParams:
    w: Array  # feature_dim x num_classes


@dataclass
class DecoderParams:
    w1: Array  # feature_dim x hidden_dim
    b1: Array
    w2: Array  # hidden_dim x input_dim
    b2: Array


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> Array:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_encoder(input_dim: int, hidden_dim: int, feature_dim: int, rng: np.random.Generator) -> EncoderParams:
    if not hidden_dim >= feature_dim >= 2:
        raise ValueError("need hidden_dim >= feature_dim >= 2")
    return EncoderParams(
        w1=_glorot(rng, input_dim, hidden_dim),
        b1=np.zeros(hidden_dim),
        w2=_glorot(rng, hidden_dim, feature_dim),
        b2=np.zeros(feature_dim),
    )


def init_classifier(feature_dim: int, num_classes: int, rng: np.random.Generator | None = None) -> ClassifierParams:
    if rng is None:
        return ClassifierParams(w=np.zeros((feature_dim, num_classes)))
    return ClassifierParams(w=_glorot(rng, feature_dim, num_classes))


def init_decoder(feature_dim: int, hidden_dim: int, input_dim: int, rng: np.random.Generator) -> DecoderParams:
    return DecoderParams(
        w1=_glorot(rng, feature_dim, hidden_dim),
        b1=np.zeros(hidden_dim),
        w2=_glorot(rng, hidden_dim, input_dim),
        b2=np.zeros(input_dim),
    )


def _check_width(x: Array, expected: int, who: str) -> Array:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != expected:
        raise ValueError(f"{who}: dimension mismatch")
    return x


def encode_forward(params: EncoderParams, batch: Array):
    x = _check_width(batch, params.w1.shape[0], "encode")
    pre = x @ params.w1 + params.b1
    hidden = np.maximum(pre, 0.0)
    features = hidden @ params.w2 + params.b2
    return features, (x, pre, hidden)


def encode(params: EncoderParams, batch: Array) -> Array:
    return encode_forward(params, batch)[0]


def encode_backward(params: EncoderParams, cache, d_features: Array):
    x, pre, hidden = cache
    dw2 = hidden.T @ d_features
    db2 = d_features.sum(axis=0)
    d_hidden = d_features @ params.w2.T
    d_pre = d_hidden * (pre > 0.0)
    dw1 = x.T @ d_pre
    db1 = d_pre.sum(axis=0)
    dx = d_pre @ params.w1.T
    return EncoderParams(dw1, db1, dw2, db2), dx


def classify_forward(params: ClassifierParams, features: Array):
    feats = _check_width(features, params.w.shape[0], "classify")
    return feats @ params.w, feats


def classify(params: ClassifierParams, features: Array) -> Array:
    return classify_forward(params, features)[0]


def classify_backward(params: ClassifierParams, cache, d_logits: Array):
    feats = cache
    return ClassifierParams(w=feats.T @ d_logits), d_logits @ params.w.T


def decode_forward(params: DecoderParams, features: Array):
    feats = _check_width(features, params.w1.shape[0], "decode")
    pre = feats @ params.w1 + params.b1
    hidden = np.maximum(pre, 0.0)
    recon = hidden @ params.w2 + params.b2
    return recon, (feats, pre, hidden)


def decode(params: DecoderParams, features: Array) -> Array:
    return decode_forward(params, features)[0]


def decode_backward(params: DecoderParams, cache, d_recon: Array):
    feats, pre, hidden = cache
    dw2 = hidden.T @ d_recon
    db2 = d_recon.sum(axis=0)
    d_hidden = d_recon @ params.w2.T
    d_pre = d_hidden * (pre > 0.0)
    dw1 = feats.T @ d_pre
    db1 = d_pre.sum(axis=0)
    d_feats = d_pre @ params.w1.T
    return DecoderParams(dw1, db1, dw2, db2), d_feats


def normalize_rows_forward(z: Array):
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("degenerate feature")
    y = z / norms
    return y, (y, norms)


def normalize_rows_backward(cache, dy: Array) -> Array:
    y, norms = cache
    return (dy - y * (dy * y).sum(axis=1, keepdims=True)) / norms


# ---------------------------------------------------------------------------
# spherical k-means


def _kmeans_pp_init(x: Array, k: int, rng: np.random.Generator) -> Array:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    best_sim = x @ centroids[0]
    for j in range(1, k):
        dist = np.maximum(1.0 - best_sim, 0.0) ** 2
        total = dist.sum()
        if total <= 0.0:
            idx = rng.integers(n)
        else:
            idx = int(rng.choice(n, p=dist / total))
        centroids[j] = x[idx]
        best_sim = np.maximum(best_sim, x @ centroids[j])
    return centroids


def _lloyd_once(x: Array, k: int, rng: np.random.Generator, max_iters: int):
    n = x.shape[0]
    centroids = _kmeans_pp_init(x, k, rng)
    labels = np.full(n, -1, dtype=np.int64)
    trace: list[float] = []
    for _ in range(max_iters):
        sims = x @ centroids.T
        new_labels = np.argmax(sims, axis=1)
        assigned = sims[np.arange(n), new_labels]
        # refill empty clusters from the points farthest from their centroid
        taken: set[int] = set()
        for j in range(k):
            if not np.any(new_labels == j):
                candidates = np.argsort(assigned, kind="stable")
                pick = next(int(c) for c in candidates if int(c) not in taken)
                taken.add(pick)
                centroids[j] = x[pick]
                new_labels[pick] = j
                assigned[pick] = 1.0
        trace.append(float(assigned.sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = x[labels == j]
            mean = members.mean(axis=0)
            norm = np.linalg.norm(mean)
            if norm > 0.0:
                centroids[j] = mean / norm
    sims = x @ centroids.T
    labels = np.argmax(sims, axis=1)
    objective = float(sims[np.arange(n), labels].sum())
    return centroids, labels, objective, trace


def spherical_kmeans(
    features: Array,
    k: int,
    rng: np.random.Generator,
    restarts: int = 10,
    max_iters: int = 100,
) -> tuple[Array, Array]:
    """Cosine k-means on L2-normalized rows; best of `restarts` runs.

    Returns (unit-norm centroids k x d, labels).  Labels are the per-row argmax
    cosine to the centroids.  Restart quality is the summed cosine of every row
    to its centroid.
    """
    x = l2_normalize_rows(np.asarray(features, dtype=np.float64))
    if x.shape[0] < k:
        raise ValueError("more clusters than samples")
    best = None
    for _ in range(max(restarts, 1)):
        centroids, labels, objective, _ = _lloyd_once(x, k, rng, max_iters)
        if best is None or objective > best[2]:
            best = (centroids, labels, objective)
    return best[0], best[1]


def init_classifier_from_centroids(centroids: Array) -> ClassifierParams:
    """Linear head whose weight columns are the centroids (cosine-proportional logits)."""
    c = np.asarray(centroids, dtype=np.float64)
    return ClassifierParams(w=c.T.copy())


# ---------------------------------------------------------------------------
# parameter containers: EMA, SGD with momentum, checkpoints


def param_arrays(params) -> list[Array]:
    return [getattr(params, f.name) for f in fields(params)]


def ema_update(teacher, student, alpha: float):
    """In-place convex combination: teacher <- alpha*teacher + (1-alpha)*student.

    Written as teacher += (1-alpha)*(student-teacher) so a teacher equal to its
    student is a true fixed point, bit for bit.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    for t, s in zip(param_arrays(teacher), param_arrays(student)):
        if t.shape != s.shape:
            raise ValueError("shape mismatch")
        if alpha == 0.0:
            t[...] = s
        else:
            t += (1.0 - alpha) * (s - t)
    return teacher


def clone_params(params):
    return type(params)(*[np.array(a, copy=True) for a in param_arrays(params)])


def add_scaled(into, grads, scale: float = 1.0):
    """into += scale * grads, field-wise across two same-typed containers."""
    for t, g in zip(param_arrays(into), param_arrays(grads)):
        t += scale * g
    return into


def zeros_like_params(params):
    return type(params)(*[np.zeros_like(a) for a in param_arrays(params)])


class MomentumSgd:
    """Textbook heavy-ball update: v <- mu*v + g; p <- p - lr*v."""

    def __init__(self, lr: float, momentum: float):
        if lr <= 0.0:
            raise ValueError("lr must be positive")
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        self.lr = lr
        self.momentum = momentum
        self._velocity: dict[str, list[Array]] = {}

    def step(self, name: str, params, grads) -> None:
        vs = self._velocity.setdefault(name, [np.zeros_like(a) for a in param_arrays(params)])
        for p, g, v in zip(param_arrays(params), param_arrays(grads), vs):
            v *= self.momentum
            v += g
            p -= self.lr * v


def save_arrays(path: str | Path, named: dict[str, Array]) -> None:
    """Flat binary checkpoint: magic line, count, then per array a header line
    (name, dtype, shape) followed by raw row-major little-endian bytes."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(f"{len(named)}\n".encode())
        for name, arr in named.items():
            a = np.asarray(arr)
            if a.dtype not in (np.float64, np.int64):
                raise ValueError(f"unsupported dtype {a.dtype} for {name}")
            dims = " ".join(str(d) for d in a.shape)
            fh.write(f"{name} {a.dtype.name} {dims}\n".encode())
            fh.write(np.ascontiguousarray(a).astype(a.dtype.newbyteorder("<")).tobytes())


def load_arrays(path: str | Path) -> dict[str, Array]:
    with open(path, "rb") as fh:
        if fh.readline() != CHECKPOINT_MAGIC:
            raise ValueError("not a parameter checkpoint")
        count = int(fh.readline())
        out: dict[str, Array] = {}
        for _ in range(count):
            parts = fh.readline().decode().split()
            name, dtype_name = parts[0], parts[1]
            shape = tuple(int(d) for d in parts[2:])
            dtype = np.dtype(dtype_name).newbyteorder("<")
            nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            buf = fh.read(nbytes)
            out[name] = np.frombuffer(buf, dtype=dtype).astype(dtype_name).reshape(shape)
    return out
