"""Constrained clustering baselines: seeded k-means and masked/constrained DBSCAN.

Both operate on raw instances (no proxy collapsing). Semi-DBSCAN first masks
distances between instances of different known classes as disconnected; the
constrained variant additionally refuses, during cluster expansion, any point
whose known label conflicts with a known label already inside the cluster.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .data import FeatureMatrix, PartialLabels, l2_normalize_rows
from .distance import DistanceMatrix
from .errors import InputError


@dataclass(frozen=True)
class KmeansParams:
    k: int
    max_iters: int = 100
    seed: int = 0
    tol: float = 1e-6

    def __post_init__(self):
        if self.k < 1:
            raise InputError("k must be at least 1")
        if self.max_iters < 1:
            raise InputError("max_iters must be at least 1")
        if self.tol < 0:
            raise InputError("tol must be nonnegative")


@dataclass(frozen=True)
class DbscanParams:
    eps: float
    min_pts: int = 4
    constrained: bool = False

    def __post_init__(self):
        if self.eps <= 0:
            raise InputError("eps must be positive")
        if self.min_pts < 1:
            raise InputError("min_pts must be at least 1")


def semi_kmeans(
    feats: FeatureMatrix, labels: PartialLabels, params: KmeansParams
) -> np.ndarray:
    """K-means with labeled instances forced into their own class cluster.

    The first C1 centers start at the labeled class means; the rest are
    seeded k-means++-style from the unlabeled instances. Deterministic under
    the params seed.
    """
    X, L = feats.data, labels.labels
    if feats.rows != labels.num_instances:
        raise InputError("feature count does not match label count")
    c1 = labels.num_known_classes
    if params.k < c1:
        raise InputError(f"k={params.k} must be at least the known class count {c1}")
    k = params.k

    centers = np.empty((k, feats.dim))
    for c in range(c1):
        centers[c] = X[L == c].mean(axis=0)
    if k > c1:
        pool = np.flatnonzero(L < 0)
        if pool.size == 0:
            raise InputError("k exceeds known classes but no unlabeled data to seed from")
        rng = np.random.default_rng(params.seed)
        for t in range(c1, k):
            if t == 0:
                pick = int(rng.integers(pool.size))
            else:
                diff = X[pool, None, :] - centers[None, :t, :]
                d2 = np.min((diff**2).sum(axis=2), axis=1)
                total = float(d2.sum())
                if total <= 0.0:
                    pick = int(rng.integers(pool.size))
                else:
                    pick = int(rng.choice(pool.size, p=d2 / total))
            centers[t] = X[pool[pick]]

    labeled = L >= 0

    def assign_step(cents):
        d2 = (X**2).sum(axis=1, keepdims=True) - 2.0 * X @ cents.T + (cents**2).sum(axis=1)
        assign = np.argmin(d2, axis=1)
        assign[labeled] = L[labeled]
        return assign

    for _ in range(params.max_iters):
        assign = assign_step(centers)
        new_centers = centers.copy()
        for t in range(k):
            members = X[assign == t]
            if members.shape[0]:
                new_centers[t] = members.mean(axis=0)
        move = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        if move < params.tol:
            break
    return assign_step(centers)


def semi_dbscan(dist, labels: PartialLabels, params: DbscanParams) -> np.ndarray:
    """Density clustering on a precomputed distance matrix; -1 marks noise.

    Distances between different known classes are overwritten to eps + 1
    before neighborhoods are formed. With ``constrained`` set, expansion
    skips any point that would put a second known class into a cluster.
    """
    d = dist.data if isinstance(dist, DistanceMatrix) else np.asarray(dist, dtype=np.float64)
    n = d.shape[0]
    if d.ndim != 2 or d.shape[1] != n:
        raise InputError("distance matrix must be square")
    if n != labels.num_instances:
        raise InputError("distance matrix size does not match label count")
    L = labels.labels
    known = L >= 0

    d = d.copy()
    conflict = known[:, None] & known[None, :] & (L[:, None] != L[None, :])
    d[conflict] = params.eps + 1.0

    neighbors = [np.flatnonzero(d[i] <= params.eps) for i in range(n)]
    core = np.fromiter((nb.size >= params.min_pts for nb in neighbors), bool, count=n)

    assign = np.full(n, -1, dtype=np.int64)
    cid = 0
    for start in range(n):
        if assign[start] != -1 or not core[start]:
            continue
        cluster_class = int(L[start]) if known[start] else -1
        assign[start] = cid
        queue = deque([start])
        while queue:
            p = queue.popleft()
            if not core[p]:
                continue  # border points do not expand
            for q in neighbors[p].tolist():
                if assign[q] != -1:
                    continue
                if params.constrained and known[q]:
                    if cluster_class >= 0 and int(L[q]) != cluster_class:
                        continue  # prior constraint: one known class per cluster
                    cluster_class = int(L[q])
                assign[q] = cid
                queue.append(q)
        cid += 1
    return assign


def resolve_noise(feats: FeatureMatrix, assignments: np.ndarray) -> np.ndarray:
    """Map noise points (-1) to the cluster with the most cosine-similar center.

    If no cluster exists at all, everything collapses into a single group 0.
    """
    assign = np.array(assignments, dtype=np.int64, copy=True)
    noise = np.flatnonzero(assign < 0)
    if noise.size == 0:
        return assign
    ids = np.unique(assign[assign >= 0])
    if ids.size == 0:
        return np.zeros_like(assign)
    centers = np.empty((ids.size, feats.dim))
    for t, gid in enumerate(ids.tolist()):
        centers[t] = feats.data[assign == gid].mean(axis=0)
    centers = l2_normalize_rows(centers)
    sims = feats.data[noise] @ centers.T
    assign[noise] = ids[np.argmax(sims, axis=1)]
    return assign
