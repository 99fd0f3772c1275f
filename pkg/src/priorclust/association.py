"""Prior-constrained greedy association of class proxies and unlabeled instances.

Nodes 0..C1-1 of the association graph are known-class proxies (normalized
mean of each class's labeled features); the remaining nodes are unlabeled
instances. Candidate pairs below a distance threshold are processed in
ascending order. A pair may open a fresh group, absorb an unassigned node,
or merge two groups; merging is refused when both groups carry a known
class (both ids < C1), which guarantees that no group ever contains two
distinct known classes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import FeatureMatrix, PartialLabels, ceil_fraction, l2_normalize_rows
from .distance import DistanceMatrix, RerankParams, k_reciprocal_jaccard
from .errors import InputError


@dataclass(frozen=True)
class HybridSet:
    """Known-class proxies (rows 0..C1-1) stacked above unlabeled instances."""

    features: FeatureMatrix
    num_known_classes: int
    unlabeled_index_map: np.ndarray  # original dataset index of rows C1..

    def __post_init__(self):
        idx = np.asarray(self.unlabeled_index_map, dtype=np.int64)
        if self.features.rows != self.num_known_classes + idx.size:
            raise InputError("hybrid feature count does not match proxies + unlabeled")
        idx.setflags(write=False)
        object.__setattr__(self, "unlabeled_index_map", idx)


def build_hybrid(feats: FeatureMatrix, labels: PartialLabels) -> HybridSet:
    """Collapse labeled instances into per-class proxies and stack the rest."""
    if feats.rows != labels.num_instances:
        raise InputError(
            f"feature count {feats.rows} does not match label count "
            f"{labels.num_instances}"
        )
    c1 = labels.num_known_classes
    X, L = feats.data, labels.labels
    parts = []
    if c1:
        proxies = np.empty((c1, feats.dim))
        for c in range(c1):
            proxies[c] = X[L == c].mean(axis=0)
        parts.append(l2_normalize_rows(proxies))
    unlabeled = np.flatnonzero(L < 0)
    if unlabeled.size:
        parts.append(X[unlabeled])
    if not parts:
        raise InputError("hybrid set is empty")
    return HybridSet(FeatureMatrix(np.vstack(parts)), c1, unlabeled)


@dataclass(frozen=True)
class CandidatePairs:
    """Association candidates sorted by ascending distance, ties by (i, j)."""

    i: np.ndarray
    j: np.ndarray
    distance: np.ndarray
    threshold: float
    num_known_classes: int

    def __post_init__(self):
        i = np.asarray(self.i, dtype=np.int64)
        j = np.asarray(self.j, dtype=np.int64)
        d = np.asarray(self.distance, dtype=np.float64)
        if not (i.shape == j.shape == d.shape) or i.ndim != 1:
            raise InputError("candidate arrays must be 1-D and equally sized")
        if self.threshold <= 0:
            raise InputError("association threshold must be positive")
        if i.size:
            if np.any(i < 0) or np.any(i >= j):
                raise InputError("candidate pairs must satisfy 0 <= i < j")
            if np.any(d >= self.threshold):
                raise InputError("candidate distances must lie below the threshold")
            if np.any(np.diff(d) < 0):
                raise InputError("candidate distances must be nondecreasing")
            ties = np.flatnonzero(np.diff(d) == 0)
            bad_tie = (i[ties] > i[ties + 1]) | (
                (i[ties] == i[ties + 1]) & (j[ties] >= j[ties + 1])
            )
            if np.any(bad_tie):
                raise InputError("tied candidate distances must be (i, j)-ordered")
            c1 = self.num_known_classes
            if np.any((i < c1) & (j < c1)):
                raise InputError("proxy-proxy pairs must be masked out")
        for name, arr in (("i", i), ("j", j), ("distance", d)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return int(self.i.size)


def select_candidates(W, threshold: float, num_known_classes: int) -> CandidatePairs:
    """Keep upper-triangle pairs below the threshold, masking proxy-proxy pairs."""
    if threshold <= 0:
        raise InputError("association threshold must be positive")
    d = W.data if isinstance(W, DistanceMatrix) else np.asarray(W, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise InputError("distance matrix must be square")
    n = d.shape[0]
    if not (0 <= num_known_classes <= n):
        raise InputError("num_known_classes out of range")
    iu, ju = np.triu_indices(n, k=1)
    vals = d[iu, ju]
    keep = vals < threshold
    c1 = num_known_classes
    if c1 > 1:
        keep &= ~((iu < c1) & (ju < c1))
    iu, ju, vals = iu[keep], ju[keep], vals[keep]
    order = np.argsort(vals, kind="stable")  # triu order is (i, j)-lexicographic
    return CandidatePairs(iu[order], ju[order], vals[order], threshold, c1)


@dataclass(frozen=True)
class Grouping:
    """Per-node group id: -1 unassigned, ids < C1 anchored to class proxies."""

    group_of: np.ndarray
    num_known_classes: int

    def __post_init__(self):
        g = np.array(self.group_of, dtype=np.int64, copy=True)
        c1 = self.num_known_classes
        if g.ndim != 1 or g.size < c1:
            raise InputError("grouping shorter than the proxy count")
        if np.any(g < -1):
            raise InputError("group ids must be -1 or nonnegative")
        if c1 and not np.array_equal(g[:c1], np.arange(c1)):
            raise InputError("proxy nodes must keep their own class id as group id")
        g.setflags(write=False)
        object.__setattr__(self, "group_of", g)

    @property
    def num_groups(self) -> int:
        return int(np.unique(self.group_of[self.group_of >= 0]).size)

    @property
    def num_unassigned(self) -> int:
        return int(np.count_nonzero(self.group_of < 0))


def greedy_associate(pairs: CandidatePairs, total_nodes: int) -> Grouping:
    """Process candidate pairs in order, refusing merges of two known classes.

    Equivalent to relabeling the larger group id to the smaller one on every
    accepted merge; implemented with union-find carrying the group label at
    the root so each step costs near-constant time.
    """
    c1 = pairs.num_known_classes
    if total_nodes < c1 or total_nodes < 1:
        raise InputError("total_nodes must cover all proxies")
    if len(pairs) and int(pairs.j.max()) >= total_nodes:
        raise InputError("pair index out of range")

    parent = list(range(total_nodes))
    size = [1] * total_nodes
    label = [-1] * total_nodes
    label[:c1] = range(c1)

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(ra: int, rb: int, new_label: int) -> None:
        if size[ra] < size[rb]:
            ra, rb = rb, ra
        parent[rb] = ra
        size[ra] += size[rb]
        label[ra] = new_label

    count = c1
    for a, b in zip(pairs.i.tolist(), pairs.j.tolist()):
        ra, rb = find(a), find(b)
        la, lb = label[ra], label[rb]
        if la == -1 and lb == -1:
            union(ra, rb, count)
            count += 1
        elif la != -1 and lb == -1:
            union(ra, rb, la)
        elif la == -1 and lb != -1:
            union(ra, rb, lb)
        elif la != lb:
            # merging two existing groups: refuse when both carry a known class
            if la >= c1 or lb >= c1:
                union(ra, rb, min(la, lb))

    group_of = np.fromiter(
        (label[find(v)] for v in range(total_nodes)), dtype=np.int64, count=total_nodes
    )
    return Grouping(group_of, c1)


def compute_group_centers(features: np.ndarray, group_of: np.ndarray):
    """Renormalized mean feature per group, ordered by ascending group id."""
    group_of = np.asarray(group_of)
    ids = np.unique(group_of[group_of >= 0])
    centers = np.empty((ids.size, features.shape[1]))
    for t, gid in enumerate(ids.tolist()):
        centers[t] = features[group_of == gid].mean(axis=0)
    if ids.size:
        centers = l2_normalize_rows(centers)
    return centers, ids


def assign_unassociated(grouping: Grouping, hybrid: HybridSet) -> Grouping:
    """Give every unassigned node the group whose center is most cosine-similar.

    Existing assignments are untouched; ties go to the smaller group id.
    """
    g = grouping.group_of
    todo = np.flatnonzero(g < 0)
    if todo.size == 0:
        return grouping
    centers, ids = compute_group_centers(hybrid.features.data, g)
    if ids.size == 0:
        raise InputError("no groups exist to absorb unassigned nodes")
    sims = hybrid.features.data[todo] @ centers.T
    out = g.copy()
    out[todo] = ids[np.argmax(sims, axis=1)]
    return Grouping(out, grouping.num_known_classes)


@dataclass(frozen=True)
class AssociationResult:
    """Dataset-level association output.

    ``group_labels`` covers every original instance: labeled instances keep
    their class id, associated instances carry their group id, and the rest
    were assigned to the nearest group center. ``centers`` holds one
    renormalized mean per group, row t belonging to ``center_group_ids[t]``.
    """

    group_labels: np.ndarray
    centers: FeatureMatrix
    center_group_ids: np.ndarray
    directly_associated: np.ndarray
    candidate_pair_count: int
    num_unassigned_before_assign: int

    @property
    def num_groups(self) -> int:
        return int(self.center_group_ids.size)


def associate_dataset(
    feats: FeatureMatrix,
    labels: PartialLabels,
    threshold: float,
    rerank: RerankParams | None = None,
    subset_ratio: float = 1.0,
    seed: int = 0,
) -> AssociationResult:
    """Full association pass: hybrid set, Jaccard distance, greedy grouping.

    With ``subset_ratio`` below 1 only a seeded random sample of unlabeled
    instances joins the association; everything left over (unsampled or
    unassigned) is mapped to the nearest group center afterwards.
    """
    if not (0.0 < subset_ratio <= 1.0):
        raise InputError(f"subset_ratio must lie in (0, 1], got {subset_ratio}")
    rerank = rerank or RerankParams()
    hybrid = build_hybrid(feats, labels)
    c1 = hybrid.num_known_classes
    m = int(hybrid.unlabeled_index_map.size)

    rng = np.random.default_rng(seed)
    if subset_ratio >= 1.0 or m == 0:
        subset = np.arange(m)
    else:
        take = min(m, max(1, ceil_fraction(subset_ratio, m)))
        subset = np.sort(rng.choice(m, size=take, replace=False))

    node_rows = np.concatenate([np.arange(c1), c1 + subset])
    sub_feats = FeatureMatrix(hybrid.features.data[node_rows])
    W = k_reciprocal_jaccard(sub_feats, rerank.clipped(sub_feats.rows))
    cands = select_candidates(W, threshold, c1)
    grouping = greedy_associate(cands, sub_feats.rows)
    centers, ids = compute_group_centers(sub_feats.data, grouping.group_of)

    out = np.full(feats.rows, -1, dtype=np.int64)
    direct = np.zeros(feats.rows, dtype=bool)
    labeled_idx = np.flatnonzero(labels.labels >= 0)
    out[labeled_idx] = labels.labels[labeled_idx]
    direct[labeled_idx] = True

    sampled_orig = hybrid.unlabeled_index_map[subset]
    sampled_groups = grouping.group_of[c1:]
    hit = sampled_groups >= 0
    out[sampled_orig[hit]] = sampled_groups[hit]
    direct[sampled_orig[hit]] = True

    rest = np.flatnonzero(out < 0)
    if rest.size:
        if ids.size == 0:
            raise InputError("association produced no groups; nothing to assign to")
        sims = feats.data[rest] @ centers.T
        out[rest] = ids[np.argmax(sims, axis=1)]

    out.setflags(write=False)
    direct.setflags(write=False)
    return AssociationResult(
        group_labels=out,
        centers=FeatureMatrix(centers),
        center_group_ids=ids,
        directly_associated=direct,
        candidate_pair_count=len(cands),
        num_unassigned_before_assign=int(rest.size),
    )


def estimate_class_count(grouping) -> int:
    """Number of distinct nonnegative group ids."""
    if isinstance(grouping, Grouping):
        return grouping.num_groups
    g = np.asarray(grouping)
    return int(np.unique(g[g >= 0]).size)
