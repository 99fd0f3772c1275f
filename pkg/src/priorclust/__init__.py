"""Semi-supervised prior-constrained clustering toolkit for category discovery."""

from .association import (
    AssociationResult,
    CandidatePairs,
    Grouping,
    HybridSet,
    assign_unassociated,
    associate_dataset,
    build_hybrid,
    compute_group_centers,
    estimate_class_count,
    greedy_associate,
    select_candidates,
)
from .baselines import DbscanParams, KmeansParams, resolve_noise, semi_dbscan, semi_kmeans
from .data import (
    DatasetSplit,
    FeatureMatrix,
    PartialLabels,
    SyntheticSpec,
    generate_synthetic,
    load_features,
    load_groups,
    load_ground_truth,
    load_labels,
    make_split,
    save_features,
    save_groups,
    save_labels,
)
from .distance import DistanceMatrix, RerankParams, cosine_distance_matrix, k_reciprocal_jaccard
from .errors import InputError, InternalInvariantError
from .evaluation import AccReport, acc_report, hungarian_match
from .prototypes import Batch, ProxyMemory, ema_update, init_memory, pk_sample, prototype_loss_and_grad
from .training import ToyModel, TrainConfig, TrainResult, train_toy

__version__ = "0.1.0"

__all__ = [
    "AccReport",
    "AssociationResult",
    "Batch",
    "CandidatePairs",
    "DatasetSplit",
    "DbscanParams",
    "DistanceMatrix",
    "FeatureMatrix",
    "Grouping",
    "HybridSet",
    "InputError",
    "InternalInvariantError",
    "KmeansParams",
    "PartialLabels",
    "ProxyMemory",
    "RerankParams",
    "SyntheticSpec",
    "ToyModel",
    "TrainConfig",
    "TrainResult",
    "acc_report",
    "assign_unassociated",
    "associate_dataset",
    "build_hybrid",
    "compute_group_centers",
    "cosine_distance_matrix",
    "ema_update",
    "estimate_class_count",
    "generate_synthetic",
    "greedy_associate",
    "hungarian_match",
    "init_memory",
    "k_reciprocal_jaccard",
    "load_features",
    "load_groups",
    "load_ground_truth",
    "load_labels",
    "make_split",
    "pk_sample",
    "prototype_loss_and_grad",
    "resolve_noise",
    "save_features",
    "save_groups",
    "save_labels",
    "select_candidates",
    "semi_dbscan",
    "semi_kmeans",
    "train_toy",
]
