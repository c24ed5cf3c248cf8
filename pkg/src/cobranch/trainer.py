"""Two-branch training orchestration.

Branch B0 sees shared-coordinate views of both domains and is supervised on
source labels plus reconstruction; branch B1 sees full target vectors and
learns by instance contrast against its teacher bank.  Finetuning adds the
online clustering loss (teacher pseudo labels from weak views supervise the
student on strong views) and, for the full ablation, the cross-branch
pairwise-consistency loss.  All randomness flows through generators derived
from the config seed, so a (config, seed) pair reproduces a run bit-for-bit.
"""

from __future__ import annotations

import copy
import dataclasses
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import AugmentConfig, DatasetBundle, augment_batch, shared_view
from .losses import (
    ccm_loss,
    contrastive,
    ocm_ce,
    pairwise_labels,
    reconstruction_mse,
    softmax_rows,
    softmax_rows_vjp,
    supervised_ce,
)
from .metrics import ari, clustering_accuracy, nmi, uniformity
from .model import (
    ClassifierParams,
    DecoderParams,
    EncoderParams,
    MomentumSgd,
    add_scaled,
    classify,
    classify_backward,
    classify_forward,
    clone_params,
    decode_backward,
    decode_forward,
    ema_update,
    encode,
    encode_backward,
    encode_forward,
    init_classifier,
    init_classifier_from_centroids,
    init_decoder,
    init_encoder,
    load_arrays,
    save_arrays,
    spherical_kmeans,
    zeros_like_params,
)
from .numerics import Array, derived_rng, l2_normalize_rows
from .pseudo_label import MemoryBank, OcmState, bank_update, generate_pseudo_labels, make_bank, write_label_dump
from .sinkhorn import TransportConfig

ABLATIONS = ("bm", "ocm", "full")

HISTORY_COLUMNS = (
    "stage",
    "epoch",
    "branch",
    "acc",
    "nmi",
    "ari",
    "uniformity",
    "loss_sup",
    "loss_dec",
    "loss_cont",
    "loss_ocm",
    "loss_ccm",
)


@dataclass(frozen=True)
class TrainConfig:
    lambda_sup: float = 1.0
    lambda_dec: float = 20.0
    lambda_cont: float = 1.0
    lambda_ocm: float = 5.0
    lambda_ccm: float = 10.0
    batch_size: int = 128
    momentum: float = 0.9
    lr_pretrain: float = 0.1
    lr_finetune: float = 0.01
    alpha: float = 0.999
    rho: float = 7.0
    xi: float = 10.0
    sinkhorn_tol: float = 1e-6
    sinkhorn_max_iters: int = 1000
    pretrain_epochs: int = 50
    finetune_epochs: int = 50
    hidden_dim: int = 64
    feature_dim: int = 32
    kmeans_restarts: int = 10
    refresh_every: int = 0  # 0: refresh pseudo labels once per epoch; k>0: every k iterations
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("lambda_sup", "lambda_dec", "lambda_cont", "lambda_ocm", "lambda_ccm"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")

    def transport(self) -> TransportConfig:
        return TransportConfig(xi=self.xi, max_iters=self.sinkhorn_max_iters, tol=self.sinkhorn_tol)


@dataclass
class BranchState:
    branch_id: str  # "B0" | "B1"
    student_encoder: EncoderParams
    student_target_classifier: ClassifierParams
    teacher_encoder: EncoderParams
    teacher_target_classifier: ClassifierParams
    bank: MemoryBank
    ocm: OcmState
    source_classifier: ClassifierParams | None = None  # B0 only
    decoder: DecoderParams | None = None  # B0 only


def build_states(bundle: DatasetBundle, cfg: TrainConfig) -> tuple[BranchState, BranchState]:
    """Fresh branch states; teachers start as exact copies of the students."""
    rng = derived_rng(cfg.seed, 0)
    d_shared = bundle.shared_dims
    d_full = bundle.input_dim
    enc0 = init_encoder(d_shared, cfg.hidden_dim, cfg.feature_dim, rng)
    enc1 = init_encoder(d_full, cfg.hidden_dim, cfg.feature_dim, rng)
    b0 = BranchState(
        branch_id="B0",
        student_encoder=enc0,
        student_target_classifier=init_classifier(cfg.feature_dim, bundle.k_target),
        teacher_encoder=clone_params(enc0),
        teacher_target_classifier=init_classifier(cfg.feature_dim, bundle.k_target),
        bank=make_bank(bundle.target_x.shape[0], cfg.feature_dim),
        ocm=OcmState(),
        source_classifier=init_classifier(cfg.feature_dim, bundle.k_source, rng),
        decoder=init_decoder(cfg.feature_dim, cfg.hidden_dim, d_shared, rng),
    )
    b1 = BranchState(
        branch_id="B1",
        student_encoder=enc1,
        student_target_classifier=init_classifier(cfg.feature_dim, bundle.k_target),
        teacher_encoder=clone_params(enc1),
        teacher_target_classifier=init_classifier(cfg.feature_dim, bundle.k_target),
        bank=make_bank(bundle.target_x.shape[0], cfg.feature_dim),
        ocm=OcmState(),
    )
    return b0, b1


def _branch_views(state: BranchState, x: Array, shared_dims: int) -> Array:
    return shared_view(x, shared_dims) if state.branch_id == "B0" else x


def refresh_bank_full(state: BranchState, bundle: DatasetBundle) -> None:
    """Fill every bank slot from the teacher on clean (un-augmented) target inputs."""
    views = _branch_views(state, bundle.target_x, bundle.shared_dims)
    feats = encode(state.teacher_encoder, views)
    bank_update(state.bank, np.arange(bundle.target_x.shape[0]), feats)


def _target_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[Array]:
    order = rng.permutation(n)
    chunks = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(chunks) > 1 and chunks[-1].size == 1:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return chunks


def _ema_branch(state: BranchState, alpha: float) -> None:
    ema_update(state.teacher_encoder, state.student_encoder, alpha)
    ema_update(state.teacher_target_classifier, state.student_target_classifier, alpha)


def _train_step(
    b0: BranchState,
    b1: BranchState,
    bundle: DatasetBundle,
    cfg: TrainConfig,
    opt: MomentumSgd,
    rng: np.random.Generator,
    tgt_idx: Array,
    ablation: str,
) -> dict[str, dict[str, float]]:
    weak = AugmentConfig.weak()
    strong = AugmentConfig.strong()
    shared = bundle.shared_dims
    n_batch = tgt_idx.size
    with_ocm = ablation in ("ocm", "full")

    src_idx = rng.integers(0, bundle.source_x.shape[0], size=n_batch)
    xs_aug = augment_batch(bundle.source_x[src_idx], weak, rng)
    xt = bundle.target_x[tgt_idx]
    xt_aug_recon = augment_batch(xt, weak, rng)
    xt_aug_student = augment_batch(xt, weak, rng)
    xt_aug_teacher_b1 = augment_batch(xt, weak, rng)
    xt_aug_teacher_b0 = augment_batch(xt, weak, rng)
    if with_ocm:
        xt_strong_b0 = augment_batch(xt, strong, rng)
        xt_strong_b1 = augment_batch(xt, strong, rng)

    # teacher features refresh their bank slots before any loss reads them
    bank_update(b0.bank, tgt_idx, encode(b0.teacher_encoder, shared_view(xt_aug_teacher_b0, shared)))
    bank_update(b1.bank, tgt_idx, encode(b1.teacher_encoder, xt_aug_teacher_b1))

    ys = bundle.source_y[src_idx]
    xs_view = shared_view(xs_aug, shared)
    xt_view = shared_view(xt_aug_recon, shared)

    # --- B0: supervised + reconstruction ---
    enc0_grads = zeros_like_params(b0.student_encoder)
    feats_s, cache_s = encode_forward(b0.student_encoder, xs_view)
    logits_s, ccache = classify_forward(b0.source_classifier, feats_s)
    sup = supervised_ce(logits_s, ys)
    recon_s, dcache_s = decode_forward(b0.decoder, feats_s)
    mse_s = reconstruction_mse(recon_s, xs_view)
    feats_t, cache_t = encode_forward(b0.student_encoder, xt_view)
    recon_t, dcache_t = decode_forward(b0.decoder, feats_t)
    mse_t = reconstruction_mse(recon_t, xt_view)

    cls_grads, d_feats = classify_backward(b0.source_classifier, ccache, cfg.lambda_sup * sup.grad)
    dec_grads, d_feats_mse = decode_backward(b0.decoder, dcache_s, cfg.lambda_dec * mse_s.grad)
    add_scaled(enc0_grads, encode_backward(b0.student_encoder, cache_s, d_feats + d_feats_mse)[0])
    dec_grads_t, d_feats_mt = decode_backward(b0.decoder, dcache_t, cfg.lambda_dec * mse_t.grad)
    add_scaled(dec_grads, dec_grads_t)
    add_scaled(enc0_grads, encode_backward(b0.student_encoder, cache_t, d_feats_mt)[0])

    # --- B1: instance contrast against the bank ---
    enc1_grads = zeros_like_params(b1.student_encoder)
    z, zcache = encode_forward(b1.student_encoder, xt_aug_student)
    cont = contrastive(z, tgt_idx, b1.bank, cfg.rho)
    add_scaled(enc1_grads, encode_backward(b1.student_encoder, zcache, cfg.lambda_cont * cont.grad)[0])

    losses = {
        "B0": {"loss_sup": sup.value, "loss_dec": mse_s.value + mse_t.value, "loss_cont": 0.0, "loss_ocm": 0.0, "loss_ccm": 0.0},
        "B1": {"loss_sup": 0.0, "loss_dec": 0.0, "loss_cont": cont.value, "loss_ocm": 0.0, "loss_ccm": 0.0},
    }

    tcls0_grads = None
    tcls1_grads = None
    if with_ocm:
        labels0 = b0.ocm.labels[tgt_idx]
        labels1 = b1.ocm.labels[tgt_idx]
        feats0, c0 = encode_forward(b0.student_encoder, shared_view(xt_strong_b0, shared))
        logits0, cc0 = classify_forward(b0.student_target_classifier, feats0)
        feats1, c1 = encode_forward(b1.student_encoder, xt_strong_b1)
        logits1, cc1 = classify_forward(b1.student_target_classifier, feats1)
        ocm0 = ocm_ce(logits0, labels0)
        ocm1 = ocm_ce(logits1, labels1)
        d_logits0 = cfg.lambda_ocm * ocm0.grad
        d_logits1 = cfg.lambda_ocm * ocm1.grad
        losses["B0"]["loss_ocm"] = ocm0.value
        losses["B1"]["loss_ocm"] = ocm1.value
        if ablation == "full":
            probs0 = softmax_rows(logits0)
            probs1 = softmax_rows(logits1)
            ccm0 = ccm_loss(probs0, pairwise_labels(labels1))  # B0 learns from B1's pairs
            ccm1 = ccm_loss(probs1, pairwise_labels(labels0))
            d_logits0 = d_logits0 + cfg.lambda_ccm * softmax_rows_vjp(probs0, ccm0.grad)
            d_logits1 = d_logits1 + cfg.lambda_ccm * softmax_rows_vjp(probs1, ccm1.grad)
            losses["B0"]["loss_ccm"] = ccm0.value
            losses["B1"]["loss_ccm"] = ccm1.value
        tcls0_grads, d_feats0 = classify_backward(b0.student_target_classifier, cc0, d_logits0)
        add_scaled(enc0_grads, encode_backward(b0.student_encoder, c0, d_feats0)[0])
        tcls1_grads, d_feats1 = classify_backward(b1.student_target_classifier, cc1, d_logits1)
        add_scaled(enc1_grads, encode_backward(b1.student_encoder, c1, d_feats1)[0])

    opt.step("b0.encoder", b0.student_encoder, enc0_grads)
    opt.step("b0.source_classifier", b0.source_classifier, cls_grads)
    opt.step("b0.decoder", b0.decoder, dec_grads)
    opt.step("b1.encoder", b1.student_encoder, enc1_grads)
    if tcls0_grads is not None:
        opt.step("b0.target_classifier", b0.student_target_classifier, tcls0_grads)
        opt.step("b1.target_classifier", b1.student_target_classifier, tcls1_grads)

    _ema_branch(b0, cfg.alpha)
    _ema_branch(b1, cfg.alpha)
    return losses


def _refresh_labels(b0: BranchState, b1: BranchState, cfg: TrainConfig, balance: bool) -> None:
    mode = "balanced" if balance else "argmax"
    transport = cfg.transport()
    generate_pseudo_labels(b0.ocm, b0.bank, b0.teacher_target_classifier, mode, transport)
    generate_pseudo_labels(b1.ocm, b1.bank, b1.teacher_target_classifier, mode, transport)


def evaluate(
    state: BranchState,
    bundle: DatasetBundle,
    cfg: TrainConfig,
    method: str = "classifier",
    use_teacher: bool = False,
    rng: np.random.Generator | None = None,
) -> dict[str, float]:
    """Cluster the un-augmented target set and score it against the hidden truth.

    method="classifier" takes the argmax of the target classifier; "kmeans"
    runs spherical k-means on the (normalized) encoder features instead, for
    states whose classifier was never trained.
    """
    views = _branch_views(state, bundle.target_x, bundle.shared_dims)
    encoder = state.teacher_encoder if use_teacher else state.student_encoder
    feats = encode(encoder, views)
    if method == "classifier":
        head = state.teacher_target_classifier if use_teacher else state.student_target_classifier
        labels = np.argmax(classify(head, feats), axis=1)
    elif method == "kmeans":
        if rng is None:
            raise ValueError("kmeans evaluation needs an rng")
        _, labels = spherical_kmeans(l2_normalize_rows(feats), bundle.k_target, rng, cfg.kmeans_restarts)
    else:
        raise ValueError("method must be 'classifier' or 'kmeans'")
    return {
        "acc": clustering_accuracy(labels, bundle.target_y),
        "nmi": nmi(labels, bundle.target_y),
        "ari": ari(labels, bundle.target_y),
        "uniformity": uniformity(labels, bundle.k_target),
    }


def pretrain(bundle: DatasetBundle, cfg: TrainConfig) -> tuple[BranchState, BranchState, list[dict]]:
    """Base-module training of both branches; returns states and loss history."""
    b0, b1 = build_states(bundle, cfg)
    refresh_bank_full(b0, bundle)
    refresh_bank_full(b1, bundle)
    rng = derived_rng(cfg.seed, 1)
    opt = MomentumSgd(cfg.lr_pretrain, cfg.momentum)
    history: list[dict] = []
    for epoch in range(1, cfg.pretrain_epochs + 1):
        sums = {b: {k: 0.0 for k in ("loss_sup", "loss_dec", "loss_cont", "loss_ocm", "loss_ccm")} for b in ("B0", "B1")}
        batches = _target_batches(bundle.target_x.shape[0], cfg.batch_size, rng)
        for tgt_idx in batches:
            step_losses = _train_step(b0, b1, bundle, cfg, opt, rng, tgt_idx, ablation="bm")
            for branch, terms in step_losses.items():
                for key, val in terms.items():
                    sums[branch][key] += val
        for branch in ("B0", "B1"):
            row = {"stage": "pretrain", "epoch": epoch, "branch": branch}
            row.update({k: v / len(batches) for k, v in sums[branch].items()})
            history.append(row)
    return b0, b1, history


def init_target_classifiers(b0: BranchState, b1: BranchState, bundle: DatasetBundle, cfg: TrainConfig) -> None:
    """Spherical k-means on teacher target features seeds both target classifiers."""
    rng = derived_rng(cfg.seed, 4)
    for state in (b0, b1):
        views = _branch_views(state, bundle.target_x, bundle.shared_dims)
        feats = l2_normalize_rows(encode(state.teacher_encoder, views))
        centroids, _ = spherical_kmeans(feats, bundle.k_target, rng, cfg.kmeans_restarts)
        state.student_target_classifier = init_classifier_from_centroids(centroids)
        state.teacher_target_classifier = init_classifier_from_centroids(centroids)
        state.ocm = OcmState()


def finetune(
    b0: BranchState,
    b1: BranchState,
    bundle: DatasetBundle,
    cfg: TrainConfig,
    ablation: str = "full",
    balance: bool = True,
    out_dir: str | Path | None = None,
) -> list[dict]:
    """Joint finetuning stage; mutates the states and returns per-epoch history.

    ablation: "bm" continues base training only (evaluated by k-means),
    "ocm" adds pseudo-label training, "full" adds the cross-branch pairwise
    loss on top.  balance switches between balanced and argmax pseudo labels.
    """
    if ablation not in ABLATIONS:
        raise ValueError(f"ablation must be one of {ABLATIONS}")
    with_ocm = ablation in ("ocm", "full")
    rng = derived_rng(cfg.seed, 2)
    opt = MomentumSgd(cfg.lr_finetune, cfg.momentum)
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    history: list[dict] = []
    iteration = 0
    for epoch in range(1, cfg.finetune_epochs + 1):
        if with_ocm and cfg.refresh_every == 0:
            _refresh_labels(b0, b1, cfg, balance)
            if out_path is not None:
                write_label_dump(out_path / f"labels_epoch_{epoch:04d}.txt", b0.ocm.labels, b1.ocm.labels)
        sums = {b: {k: 0.0 for k in ("loss_sup", "loss_dec", "loss_cont", "loss_ocm", "loss_ccm")} for b in ("B0", "B1")}
        batches = _target_batches(bundle.target_x.shape[0], cfg.batch_size, rng)
        for tgt_idx in batches:
            if with_ocm and cfg.refresh_every > 0 and iteration % cfg.refresh_every == 0:
                _refresh_labels(b0, b1, cfg, balance)
            step_losses = _train_step(b0, b1, bundle, cfg, opt, rng, tgt_idx, ablation)
            iteration += 1
            for branch, terms in step_losses.items():
                for key, val in terms.items():
                    sums[branch][key] += val
        eval_method = "classifier" if with_ocm else "kmeans"
        for branch, state in (("B0", b0), ("B1", b1)):
            scores = evaluate(state, bundle, cfg, method=eval_method, rng=derived_rng(cfg.seed, 3, epoch))
            row = {"stage": "finetune", "epoch": epoch, "branch": branch}
            row.update(scores)
            row.update({k: v / len(batches) for k, v in sums[branch].items()})
            history.append(row)
    return history


def history_to_csv(history: list[dict]) -> str:
    buf = io.StringIO()
    buf.write(",".join(HISTORY_COLUMNS) + "\n")
    for row in history:
        cells = []
        for col in HISTORY_COLUMNS:
            val = row.get(col, "")
            cells.append(repr(val) if isinstance(val, float) else str(val))
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# checkpoints

_PARAM_FIELDS = {
    "student_encoder": EncoderParams,
    "teacher_encoder": EncoderParams,
    "student_target_classifier": ClassifierParams,
    "teacher_target_classifier": ClassifierParams,
    "source_classifier": ClassifierParams,
    "decoder": DecoderParams,
}


def save_branch_state(path: str | Path, state: BranchState) -> None:
    named: dict[str, Array] = {"meta.branch": np.array(0 if state.branch_id == "B0" else 1, dtype=np.int64)}
    for attr, _ in _PARAM_FIELDS.items():
        params = getattr(state, attr)
        if params is None:
            continue
        for f in dataclasses.fields(params):
            named[f"{attr}.{f.name}"] = getattr(params, f.name)
    named["bank.features"] = state.bank.features
    named["bank.populated"] = state.bank.populated.astype(np.int64)
    named["ocm.generation"] = np.array(state.ocm.generation, dtype=np.int64)
    if state.ocm.labels is not None:
        named["ocm.labels"] = state.ocm.labels.astype(np.int64)
    save_arrays(path, named)


def load_branch_state(path: str | Path) -> BranchState:
    named = load_arrays(path)

    def gather(prefix: str, cls):
        keys = [k for k in named if k.startswith(prefix + ".")]
        if not keys:
            return None
        return cls(**{k.split(".", 1)[1]: named[k] for k in keys})

    bank = MemoryBank(features=named["bank.features"], populated=named["bank.populated"].astype(bool))
    ocm = OcmState(
        labels=named["ocm.labels"] if "ocm.labels" in named else None,
        generation=int(named["ocm.generation"]),
    )
    return BranchState(
        branch_id="B0" if int(named["meta.branch"]) == 0 else "B1",
        student_encoder=gather("student_encoder", EncoderParams),
        student_target_classifier=gather("student_target_classifier", ClassifierParams),
        teacher_encoder=gather("teacher_encoder", EncoderParams),
        teacher_target_classifier=gather("teacher_target_classifier", ClassifierParams),
        bank=bank,
        ocm=ocm,
        source_classifier=gather("source_classifier", ClassifierParams),
        decoder=gather("decoder", DecoderParams),
    )


def copy_states(b0: BranchState, b1: BranchState) -> tuple[BranchState, BranchState]:
    return copy.deepcopy(b0), copy.deepcopy(b1)
