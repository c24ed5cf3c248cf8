"""Two-branch co-training for open-set cross-domain clustering on synthetic data."""

from .data import AugmentConfig, DatasetBundle, SynthConfig, augment, generate, shared_view
from .metrics import ari, clustering_accuracy, nmi, uniformity
from .numerics import check_gradient, cosine_similarity, seeded_rng, softmax_columns
from .pseudo_label import MemoryBank, OcmState, bank_predictions, bank_update, generate_pseudo_labels
from .sinkhorn import SoftAssignment, TransportConfig, argmax_labels, round_to_labels, solve_balanced
from .trainer import BranchState, TrainConfig, evaluate, finetune, init_target_classifiers, pretrain

__all__ = [
    "AugmentConfig",
    "BranchState",
    "DatasetBundle",
    "MemoryBank",
    "OcmState",
    "SoftAssignment",
    "SynthConfig",
    "TrainConfig",
    "TransportConfig",
    "argmax_labels",
    "ari",
    "augment",
    "bank_predictions",
    "bank_update",
    "check_gradient",
    "clustering_accuracy",
    "cosine_similarity",
    "evaluate",
    "finetune",
    "generate",
    "generate_pseudo_labels",
    "init_target_classifiers",
    "nmi",
    "pretrain",
    "round_to_labels",
    "seeded_rng",
    "shared_view",
    "softmax_columns",
    "solve_balanced",
    "uniformity",
]
