"""Cosine distances and the k-reciprocal-encoded Jaccard distance.

The Jaccard construction follows the classic re-ranking recipe on top of
cosine distances:

1. k-reciprocal sets R(p, k1) = {q in kNN(p, k1) : p in kNN(q, k1)}, where
   kNN lists include the point itself and break distance ties by ascending
   index.
2. Expansion: for q in R(p, k1), the half-size set R(q, ceil(k1/2)) is
   added to R*(p) when it overlaps R(p, k1) in at least two thirds of its
   elements.
3. Membership vectors V_p[q] = exp(-d_cos(p, q)) for q in R*(p), 0 elsewhere.
4. Local query expansion: V_p is replaced by the mean of V over the k2
   nearest neighbors of p (self included).
5. D_J(p, q) = 1 - sum_j min(V_p[j], V_q[j]) / sum_j max(V_p[j], V_q[j]).

The output is the pure Jaccard distance, with no blending back into the
cosine distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import FeatureMatrix
from .errors import InputError


@dataclass(frozen=True)
class RerankParams:
    """Neighborhood sizes for the re-ranked Jaccard distance."""

    k1: int = 20
    k2: int = 6

    def __post_init__(self):
        if self.k2 < 1:
            raise InputError("k2 must be at least 1")
        if self.k1 < self.k2:
            raise InputError("k1 must be at least k2")

    def clipped(self, n: int) -> "RerankParams":
        """Clip neighborhood sizes so they are valid for an n-point input."""
        k1 = min(self.k1, max(1, n - 1))
        return RerankParams(k1, min(self.k2, k1))


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric zero-diagonal distance matrix tagged with its metric kind."""

    data: np.ndarray
    kind: str

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
            raise InputError("distance matrix must be square and non-empty")
        if self.kind not in ("cosine", "jaccard"):
            raise InputError(f"unknown distance kind {self.kind!r}")
        if not np.all(np.isfinite(arr)):
            raise InputError("distance matrix contains non-finite values")
        if np.max(np.abs(arr - arr.T)) > 1e-6:
            raise InputError("distance matrix is not symmetric")
        if np.any(np.abs(np.diagonal(arr)) > 0):
            raise InputError("distance matrix diagonal must be zero")
        upper = 2.0 if self.kind == "cosine" else 1.0
        if arr.min() < 0.0 or arr.max() > upper:
            raise InputError(f"{self.kind} distances must lie in [0, {upper}]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def size(self) -> int:
        return self.data.shape[0]


def _cosine_dist(data: np.ndarray) -> np.ndarray:
    d = 1.0 - data @ data.T
    d = np.clip((d + d.T) / 2.0, 0.0, 2.0)
    np.fill_diagonal(d, 0.0)
    return d


def cosine_distance_matrix(feats: FeatureMatrix) -> DistanceMatrix:
    """Pairwise 1 - <row_i, row_j>, clamped to [0, 2], zero diagonal."""
    return DistanceMatrix(_cosine_dist(feats.data), "cosine")


def _reciprocal_sets(rank: np.ndarray, k: int):
    """Per-point k-reciprocal neighbor sets (self included in kNN lists)."""
    n = rank.shape[0]
    knn = rank[:, : k + 1]
    is_nn = np.zeros((n, n), dtype=bool)
    is_nn[np.arange(n)[:, None], knn] = True
    return [knn[i][is_nn[knn[i], i]] for i in range(n)]


def k_reciprocal_jaccard(
    feats: FeatureMatrix, params: RerankParams | None = None
) -> DistanceMatrix:
    """Re-ranked Jaccard distance over the rows of ``feats``."""
    params = params or RerankParams()
    n = feats.rows
    if n == 1:
        return DistanceMatrix(np.zeros((1, 1)), "jaccard")
    if params.k1 >= n:
        raise InputError(f"k1={params.k1} must be smaller than the point count {n}")
    k1, k2 = params.k1, params.k2

    dist = _cosine_dist(feats.data)
    rank = np.argsort(dist, axis=1, kind="stable")

    recip = _reciprocal_sets(rank, k1)
    recip_half = _reciprocal_sets(rank, math.ceil(k1 / 2))

    V = np.zeros((n, n))
    member = np.zeros(n, dtype=bool)
    for i in range(n):
        base = recip[i]
        member[base] = True
        expanded = set(base.tolist())
        for q in base.tolist():
            half = recip_half[q]
            if 3 * int(np.count_nonzero(member[half])) >= 2 * half.size:
                expanded.update(half.tolist())
        member[base] = False
        idx = np.fromiter(expanded, dtype=np.int64, count=len(expanded))
        V[i, idx] = np.exp(-dist[i, idx])
    del dist

    if k2 > 1:
        expanded_V = np.empty_like(V)
        for i in range(n):
            expanded_V[i] = V[rank[i, :k2]].mean(axis=0)
        V = expanded_V
    del rank

    # sum_j max(a, b) = sum(a) + sum(b) - sum_j min(a, b), so only the
    # minimum overlaps need accumulating; an inverted column index keeps
    # that sparse.
    totals = V.sum(axis=1)
    VT = np.ascontiguousarray(V.T)
    inv = [np.flatnonzero(VT[j]) for j in range(n)]
    min_sum = np.zeros((n, n))
    for i in range(n):
        acc = min_sum[i]
        row = V[i]
        for j in np.flatnonzero(row):
            rows = inv[j]
            acc[rows] += np.minimum(row[j], VT[j, rows])
    del VT

    denom = totals[:, None] + totals[None, :] - min_sum
    jaccard = 1.0 - min_sum / denom
    jaccard = np.clip((jaccard + jaccard.T) / 2.0, 0.0, 1.0)
    np.fill_diagonal(jaccard, 0.0)
    return DistanceMatrix(jaccard, "jaccard")
