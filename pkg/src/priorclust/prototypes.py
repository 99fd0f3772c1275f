"""Prototype memory, contrastive loss with analytic gradient, PK batch sampling.

The memory holds one unit-norm prototype per group. An instance feature f
with pseudo-label y contributes

    loss = -log softmax(K f / tau)[y]

averaged over the batch, with log-sum-exp stabilization. After each batch
the touched prototypes follow an exponential moving average toward the
batch features and are renormalized to the unit sphere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .association import Grouping
from .data import FeatureMatrix, l2_normalize_rows
from .errors import InputError

MEMORY_NORM_TOL = 1e-6
FEATURE_NORM_TOL = 1e-4


class ProxyMemory:
    """Unit-norm prototype rows with an EMA momentum and softmax temperature."""

    __slots__ = ("prototypes", "momentum", "temperature")

    def __init__(self, prototypes, momentum: float = 0.2, temperature: float = 0.05):
        arr = np.array(prototypes, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise InputError("prototypes must form a non-empty 2-D matrix")
        if not np.all(np.isfinite(arr)):
            raise InputError("prototypes contain non-finite values")
        norms = np.linalg.norm(arr, axis=1)
        if np.any(np.abs(norms - 1.0) > MEMORY_NORM_TOL):
            raise InputError("prototype rows must be unit-norm")
        if not (0.0 <= momentum <= 1.0):
            raise InputError("momentum must lie in [0, 1]")
        if temperature <= 0.0:
            raise InputError("temperature must be positive")
        self.prototypes = arr
        self.momentum = float(momentum)
        self.temperature = float(temperature)

    @property
    def num_prototypes(self) -> int:
        return self.prototypes.shape[0]

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]


def _group_array(grouping) -> np.ndarray:
    if isinstance(grouping, Grouping):
        return grouping.group_of
    return np.asarray(grouping, dtype=np.int64)


def init_memory(
    feats, grouping, momentum: float = 0.2, temperature: float = 0.05
) -> ProxyMemory:
    """Prototype g = renormalized mean of the features whose group id is g.

    Group ids must be dense 0..G-1 (every id has at least one member);
    entries of -1 are ignored.
    """
    X = feats.data if isinstance(feats, FeatureMatrix) else np.asarray(feats, float)
    g = _group_array(grouping)
    if g.size != X.shape[0]:
        raise InputError("grouping length does not match feature count")
    present = g[g >= 0]
    if present.size == 0:
        raise InputError("grouping has no groups")
    num_groups = int(present.max()) + 1
    rows = np.empty((num_groups, X.shape[1]))
    for gid in range(num_groups):
        members = X[g == gid]
        if members.shape[0] == 0:
            raise InputError(f"group {gid} has no members")
        rows[gid] = members.mean(axis=0)
    return ProxyMemory(l2_normalize_rows(rows), momentum, temperature)


def _check_batch(memory: ProxyMemory, batch_features, batch_labels):
    F = np.asarray(batch_features, dtype=np.float64)
    y = np.asarray(batch_labels, dtype=np.int64)
    if F.ndim != 2 or F.shape[0] == 0:
        raise InputError("batch features must be a non-empty 2-D array")
    if F.shape[1] != memory.dim:
        raise InputError("batch feature dimension does not match the memory")
    if y.shape != (F.shape[0],):
        raise InputError("batch labels must align with batch features")
    if np.any(y < 0) or np.any(y >= memory.num_prototypes):
        raise InputError("batch label out of prototype range")
    norms = np.linalg.norm(F, axis=1)
    if np.any(np.abs(norms - 1.0) > FEATURE_NORM_TOL):
        raise InputError("batch features must be unit-norm")
    return F, y


def prototype_loss_and_grad(memory: ProxyMemory, batch_features, batch_labels):
    """Mean prototypical contrastive loss and its gradient w.r.t. the features.

    Returns (loss, grad) with grad shaped like the batch; per instance the
    gradient is (sum_j p_j K[j] - K[y]) / (tau * B) where p is the softmax
    over prototype similarities.
    """
    F, y = _check_batch(memory, batch_features, batch_labels)
    K, tau = memory.prototypes, memory.temperature
    B = F.shape[0]
    logits = F @ K.T / tau
    peak = logits.max(axis=1, keepdims=True)
    lse = peak[:, 0] + np.log(np.exp(logits - peak).sum(axis=1))
    loss = float(np.mean(lse - logits[np.arange(B), y]))
    probs = np.exp(logits - lse[:, None])
    grad = (probs @ K - K[y]) / (tau * B)
    return loss, grad


def ema_update(memory: ProxyMemory, feature, label: int) -> np.ndarray:
    """Move prototype ``label`` toward ``feature`` and renormalize it.

    Only that row changes; the new row is returned.
    """
    f = np.asarray(feature, dtype=np.float64)
    if f.shape != (memory.dim,):
        raise InputError("feature dimension does not match the memory")
    label = int(label)
    if not (0 <= label < memory.num_prototypes):
        raise InputError(f"label {label} out of prototype range")
    if abs(np.linalg.norm(f) - 1.0) > FEATURE_NORM_TOL:
        raise InputError("feature must be unit-norm")
    mu = memory.momentum
    raw = mu * memory.prototypes[label] + (1.0 - mu) * f
    norm = np.linalg.norm(raw)
    if norm == 0.0:
        raise InputError("moving average collapsed to the zero vector")
    memory.prototypes[label] = raw / norm
    return memory.prototypes[label].copy()


@dataclass(frozen=True)
class Batch:
    """Instance indices with their pseudo-labels, grouped P classes x K draws."""

    indices: np.ndarray
    labels: np.ndarray

    @property
    def size(self) -> int:
        return int(self.indices.size)


def pk_sample(grouping, p: int, k: int, seed: int = 0) -> list[Batch]:
    """One epoch of PK batches: p distinct groups per batch, k draws per group.

    Groups are shuffled and consumed without replacement; the final batch is
    padded with extra distinct groups when p does not divide the group count,
    so every group appears at least once per epoch. Groups with fewer than k
    members are sampled with replacement. Entries of -1 are excluded.
    """
    if p < 1 or k < 1:
        raise InputError("p and k must be at least 1")
    g = _group_array(grouping)
    ids = np.unique(g[g >= 0])
    if ids.size < p:
        raise InputError(f"need at least {p} groups with members, have {ids.size}")
    members = {int(gid): np.flatnonzero(g == gid) for gid in ids.tolist()}

    rng = np.random.default_rng(seed)
    order = rng.permutation(ids)
    num_batches = -(-ids.size // p)
    batches = []
    for b in range(num_batches):
        chunk = order[b * p : (b + 1) * p]
        if chunk.size < p:
            extras = rng.choice(
                np.setdiff1d(ids, chunk), size=p - chunk.size, replace=False
            )
            chunk = np.concatenate([chunk, extras])
        idx_parts, lab_parts = [], []
        for gid in chunk.tolist():
            pool = members[int(gid)]
            replace = pool.size < k
            take = rng.choice(pool, size=k, replace=replace)
            idx_parts.append(take)
            lab_parts.append(np.full(k, gid, dtype=np.int64))
        batches.append(Batch(np.concatenate(idx_parts), np.concatenate(lab_parts)))
    return batches
