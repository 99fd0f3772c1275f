"""Toy linear-embedding trainer alternating association and prototypical contrast.

Each epoch embeds every instance through ``normalize(x W)``, re-associates
the embedded dataset, rebuilds the prototype memory from the resulting
groups, and then walks PK batches: the contrastive gradient is chained
through the row normalization, the weight matrix takes a plain gradient
step, and each batch instance nudges its prototype by EMA. After the last
epoch one more association on the trained embedding produces the final
grouping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .association import AssociationResult, associate_dataset
from .data import FeatureMatrix, PartialLabels
from .distance import RerankParams
from .errors import InputError
from .evaluation import acc_report
from .prototypes import ema_update, init_memory, pk_sample, prototype_loss_and_grad


@dataclass
class ToyModel:
    """Linear map followed by row normalization: embed(x) = normalize(x W)."""

    weight: np.ndarray

    def __post_init__(self):
        w = np.array(self.weight, dtype=np.float64, copy=True)
        if w.ndim != 2 or w.shape[0] == 0 or w.shape[1] == 0:
            raise InputError("weight must be a non-empty 2-D matrix")
        if not np.all(np.isfinite(w)):
            raise InputError("weight contains non-finite values")
        self.weight = w

    @classmethod
    def identity(cls, dim: int) -> "ToyModel":
        return cls(np.eye(dim))

    @classmethod
    def random(cls, d_in: int, d_out: int, seed: int = 0) -> "ToyModel":
        rng = np.random.default_rng(seed)
        return cls(rng.standard_normal((d_in, d_out)) / math.sqrt(d_in))

    def embed(self, X: np.ndarray) -> np.ndarray:
        Z = np.asarray(X, dtype=np.float64) @ self.weight
        norms = np.linalg.norm(Z, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise InputError("embedding collapsed to a zero vector")
        return Z / norms


@dataclass(frozen=True)
class TrainConfig:
    """Tunables for the association/representation loop.

    The contrastive defaults are temperature 0.05, memory momentum 0.2 and
    association threshold 0.35; batches draw 8 pseudo-classes with 16
    instances each.
    """

    threshold: float = 0.35
    temperature: float = 0.05
    momentum: float = 0.2
    subset_ratio: float = 1.0
    seed: int = 0
    epochs: int = 30
    lr: float = 0.2
    batch_p: int = 8
    batch_k: int = 16
    k1: int = 20
    k2: int = 6
    include_assigned: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise InputError("epochs must be at least 1")
        if self.lr < 0:
            raise InputError("lr must be nonnegative")
        if self.threshold <= 0:
            raise InputError("threshold must be positive")
        if not (0 < self.subset_ratio <= 1):
            raise InputError("subset_ratio must lie in (0, 1]")
        if not (0 <= self.momentum <= 1):
            raise InputError("momentum must lie in [0, 1]")
        if self.temperature <= 0:
            raise InputError("temperature must be positive")
        if self.batch_p < 1 or self.batch_k < 1:
            raise InputError("batch_p and batch_k must be at least 1")

    def rerank_params(self) -> RerankParams:
        return RerankParams(self.k1, self.k2)


def _dense_ids(group_labels: np.ndarray):
    """Relabel group ids to 0..G-1 preserving ascending order."""
    ids = np.unique(group_labels[group_labels >= 0])
    dense = np.full(group_labels.shape, -1, dtype=np.int64)
    keep = group_labels >= 0
    dense[keep] = np.searchsorted(ids, group_labels[keep])
    return dense, ids


@dataclass
class TrainResult:
    model: ToyModel
    final_labels: np.ndarray
    final_association: AssociationResult
    history: list[dict] = field(default_factory=list)


def train_toy(
    feats: FeatureMatrix,
    labels: PartialLabels,
    model: ToyModel,
    cfg: TrainConfig,
    truth=None,
) -> TrainResult:
    """Run the iterative association / contrastive-learning loop.

    ``truth`` enables the per-epoch accuracy fields in the history; without
    it those fields are None. The history holds one record per training
    epoch plus a closing record (loss None) for the post-training
    association that yields the final grouping.
    """
    if feats.rows != labels.num_instances:
        raise InputError("feature count does not match label count")
    if truth is not None:
        truth = np.asarray(truth, dtype=np.int64)
        if truth.shape != (feats.rows,):
            raise InputError("ground truth length does not match feature count")

    rng = np.random.default_rng(cfg.seed)
    pk_seed = int(rng.integers(2**31))  # fixed across epochs: lr=0 gives a flat loss
    W = np.array(model.weight, dtype=np.float64, copy=True)
    X = feats.data
    history: list[dict] = []
    final: AssociationResult | None = None

    for epoch in range(cfg.epochs + 1):
        current = ToyModel(W)
        embedded = FeatureMatrix(current.embed(X))
        assoc_seed = int(rng.integers(2**31))
        assoc = associate_dataset(
            embedded,
            labels,
            cfg.threshold,
            cfg.rerank_params(),
            cfg.subset_ratio,
            assoc_seed,
        )
        record = {
            "epoch": epoch,
            "loss": None,
            "all_acc": None,
            "old_acc": None,
            "new_acc": None,
            "num_groups": assoc.num_groups,
        }
        if truth is not None:
            report = acc_report(assoc.group_labels, truth, labels)
            record["all_acc"] = report.all_acc
            record["old_acc"] = report.old_acc
            record["new_acc"] = report.new_acc

        if epoch == cfg.epochs:
            history.append(record)
            final = assoc
            break

        dense, _ = _dense_ids(assoc.group_labels)
        memory = init_memory(embedded, dense, cfg.momentum, cfg.temperature)
        sample_pool = dense.copy()
        if not cfg.include_assigned:
            sample_pool[~assoc.directly_associated] = -1
        batches = pk_sample(sample_pool, cfg.batch_p, cfg.batch_k, pk_seed)

        losses = []
        for batch in batches:
            x = X[batch.indices]
            z = x @ W
            norms = np.linalg.norm(z, axis=1, keepdims=True)
            if np.any(norms == 0.0):
                raise InputError("embedding collapsed to a zero vector")
            f = z / norms
            loss, grad_f = prototype_loss_and_grad(memory, f, batch.labels)
            losses.append(loss)
            # chain through row normalization: dL/dz = (g - (g.f) f) / |z|
            grad_z = (grad_f - (grad_f * f).sum(axis=1, keepdims=True) * f) / norms
            W -= cfg.lr * (x.T @ grad_z)
            for row, lab in zip(f, batch.labels.tolist()):
                ema_update(memory, row, lab)

        record["loss"] = float(np.mean(losses))
        history.append(record)

    assert final is not None
    return TrainResult(
        model=ToyModel(W),
        final_labels=final.group_labels,
        final_association=final,
        history=history,
    )
