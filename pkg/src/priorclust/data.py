"""Feature/label data model, synthetic generator, and on-disk formats.

Features travel as PALF binary files: magic ``b"PALF"``, u16 version (=1),
u32 rows, u32 cols (all little-endian), then rows*cols float32 values in
row-major order. Labels and group assignments are CSV files with headers
``index,label`` and ``index,group`` respectively; label -1 marks an
unlabeled instance. Ground-truth files reuse the ``index,label`` shape
with nonnegative class ids.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import InputError

PALF_MAGIC = b"PALF"
PALF_VERSION = 1
PALF_HEADER = struct.Struct("<HII")
UNIT_NORM_TOL = 1e-4


def l2_normalize_rows(data) -> np.ndarray:
    """Scale every row to unit Euclidean norm; zero-norm rows are an error."""
    arr = np.asarray(data, dtype=np.float64)
    norms = np.linalg.norm(arr, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise InputError("cannot normalize zero-norm rows")
    return arr / norms


def ceil_fraction(ratio: float, count: int) -> int:
    # Guard against float artifacts such as 0.1 * 30 = 3.0000000000000004.
    return int(math.ceil(ratio * count - 1e-9))


class FeatureMatrix:
    """Immutable row-major matrix of unit-norm embedding vectors."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64, order="C", copy=True)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise InputError("feature matrix must be a non-empty 2-D array")
        if not np.all(np.isfinite(arr)):
            raise InputError("feature matrix contains non-finite values")
        norms = np.linalg.norm(arr, axis=1)
        bad = np.abs(norms - 1.0) > UNIT_NORM_TOL
        if np.any(bad):
            raise InputError(
                f"{int(bad.sum())} feature rows deviate from unit norm "
                f"by more than {UNIT_NORM_TOL}"
            )
        arr.setflags(write=False)
        self.data = arr

    @classmethod
    def from_raw(cls, data) -> "FeatureMatrix":
        """Build from arbitrary finite vectors, normalizing rows first."""
        return cls(l2_normalize_rows(data))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __repr__(self) -> str:
        return f"FeatureMatrix(rows={self.rows}, dim={self.dim})"


class PartialLabels:
    """Per-instance class label in [0, C1) for labeled instances, -1 otherwise.

    The known classes must be densely numbered: every class in [0, C1) has at
    least one labeled instance, where C1 = 1 + max(label).
    """

    __slots__ = ("labels",)

    def __init__(self, labels):
        arr = np.array(labels, dtype=np.int64, copy=True)
        if arr.ndim != 1 or arr.size == 0:
            raise InputError("labels must be a non-empty 1-D array")
        if np.any(arr < -1):
            raise InputError("labels must be -1 (unlabeled) or nonnegative")
        known = arr[arr >= 0]
        c1 = int(known.max()) + 1 if known.size else 0
        present = np.unique(known)
        if present.size != c1:
            missing = sorted(set(range(c1)) - set(present.tolist()))
            raise InputError(f"known classes without a labeled instance: {missing}")
        arr.setflags(write=False)
        self.labels = arr

    @property
    def num_known_classes(self) -> int:
        known = self.labels[self.labels >= 0]
        return int(known.max()) + 1 if known.size else 0

    @property
    def num_instances(self) -> int:
        return int(self.labels.size)

    @property
    def labeled_mask(self) -> np.ndarray:
        return self.labels >= 0

    @property
    def unlabeled_mask(self) -> np.ndarray:
        return self.labels < 0

    def __repr__(self) -> str:
        return (
            f"PartialLabels(n={self.num_instances}, "
            f"known_classes={self.num_known_classes}, "
            f"labeled={int(self.labeled_mask.sum())})"
        )


@dataclass(frozen=True)
class DatasetSplit:
    """How to carve ground truth into known/unknown classes and labeled samples."""

    known_class_ratio: float
    labeled_sample_ratio: float
    seed: int = 0

    def __post_init__(self):
        for name in ("known_class_ratio", "labeled_sample_ratio"):
            value = getattr(self, name)
            if not (0.0 < value <= 1.0):
                raise InputError(f"{name} must lie in (0, 1], got {value}")


@dataclass(frozen=True)
class SyntheticSpec:
    """Unit-sphere Gaussian mixture used for desk-scale experiments."""

    num_classes: int
    points_per_class: int
    ambient_dim: int
    noise_sigma: float
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise InputError("num_classes must be at least 2")
        if self.points_per_class < 2:
            raise InputError("points_per_class must be at least 2")
        if self.ambient_dim < 2:
            raise InputError("ambient_dim must be at least 2")
        if self.noise_sigma < 0:
            raise InputError("noise_sigma must be nonnegative")


def generate_synthetic(spec: SyntheticSpec):
    """Sample a labeled mixture on the unit sphere.

    Class means are drawn uniformly on the sphere; each sample is the row
    normalization of ``mean + noise_sigma * N(0, I)``. With zero noise the
    samples are exact copies of their class mean. Deterministic under seed.

    Returns (FeatureMatrix, ground_truth_labels).
    """
    rng = np.random.default_rng(spec.seed)
    means = l2_normalize_rows(rng.standard_normal((spec.num_classes, spec.ambient_dim)))
    truth = np.repeat(np.arange(spec.num_classes), spec.points_per_class)
    if spec.noise_sigma == 0.0:
        data = means[truth].copy()
    else:
        noise = rng.standard_normal((truth.size, spec.ambient_dim))
        data = l2_normalize_rows(means[truth] + spec.noise_sigma * noise)
    return FeatureMatrix(data), truth


def make_split(truth, split: DatasetSplit) -> PartialLabels:
    """Mark a seeded subset of classes as known and label a subset of each.

    ceil(known_class_ratio * C) classes become known; within each known class
    ceil(labeled_sample_ratio * n_c) instances are labeled. Known classes are
    renumbered 0..C1-1 in ascending original-id order.
    """
    truth = np.asarray(truth, dtype=np.int64)
    if truth.ndim != 1 or truth.size == 0:
        raise InputError("ground truth labels must be a non-empty 1-D array")
    if np.any(truth < 0):
        raise InputError("ground truth labels must be nonnegative")
    classes = np.unique(truth)
    c1 = ceil_fraction(split.known_class_ratio, classes.size)
    rng = np.random.default_rng(split.seed)
    known = np.sort(rng.choice(classes, size=c1, replace=False))
    labels = np.full(truth.shape, -1, dtype=np.int64)
    for new_id, cls in enumerate(known):
        members = np.flatnonzero(truth == cls)
        n_lab = ceil_fraction(split.labeled_sample_ratio, members.size)
        chosen = rng.choice(members, size=n_lab, replace=False)
        labels[chosen] = new_id
    return PartialLabels(labels)


def save_features(features: FeatureMatrix, path) -> None:
    """Write a FeatureMatrix as a PALF binary file."""
    payload = np.ascontiguousarray(features.data, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(PALF_MAGIC)
        fh.write(PALF_HEADER.pack(PALF_VERSION, features.rows, features.dim))
        fh.write(payload)


def load_features(path, normalize: bool = False) -> FeatureMatrix:
    """Read a PALF binary file.

    Rows whose norm deviates from 1 by more than the tolerance are rejected
    unless ``normalize`` is set, in which case only those rows are rescaled.
    """
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except FileNotFoundError:
        raise InputError(f"feature file not found: {path}") from None
    header_len = len(PALF_MAGIC) + PALF_HEADER.size
    if len(blob) < header_len:
        raise InputError(f"truncated PALF header in {path}")
    if blob[:4] != PALF_MAGIC:
        raise InputError(f"bad PALF magic {blob[:4]!r} in {path}")
    version, rows, cols = PALF_HEADER.unpack_from(blob, 4)
    if version != PALF_VERSION:
        raise InputError(f"unsupported PALF version {version} in {path}")
    if rows == 0 or cols == 0:
        raise InputError(f"PALF file {path} declares zero rows or columns")
    body = blob[header_len:]
    expected = rows * cols * 4
    if len(body) != expected:
        raise InputError(
            f"PALF payload in {path} has {len(body)} bytes, expected {expected}"
        )
    data = np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise InputError(f"non-finite feature values in {path}")
    norms = np.linalg.norm(data, axis=1)
    if np.any(norms == 0.0):
        raise InputError(f"zero-norm feature row in {path}")
    off = np.abs(norms - 1.0) > UNIT_NORM_TOL
    if np.any(off):
        if not normalize:
            raise InputError(
                f"{int(off.sum())} rows in {path} are not unit-norm; "
                "pass normalize=True to rescale them"
            )
        data[off] /= norms[off, None]
    return FeatureMatrix(data)


def _read_indexed_csv(path, value_column: str) -> np.ndarray:
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise InputError(f"CSV file not found: {path}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"empty CSV file: {path}") from None
        if [h.strip() for h in header] != ["index", value_column]:
            raise InputError(
                f"{path}: expected header 'index,{value_column}', got {','.join(header)}"
            )
        pairs = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise InputError(f"{path}:{lineno}: expected two columns")
            try:
                pairs.append((int(row[0]), int(row[1])))
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-integer entry") from None
    if not pairs:
        raise InputError(f"{path}: no data rows")
    indices = np.array([p[0] for p in pairs], dtype=np.int64)
    values = np.array([p[1] for p in pairs], dtype=np.int64)
    order = np.argsort(indices, kind="stable")
    indices, values = indices[order], values[order]
    if np.any(np.diff(indices) == 0):
        dup = int(indices[np.flatnonzero(np.diff(indices) == 0)[0]])
        raise InputError(f"{path}: duplicate index {dup}")
    if indices[0] != 0 or indices[-1] != indices.size - 1:
        raise InputError(f"{path}: indices must cover 0..{indices.size - 1} exactly")
    return values


def load_labels(path) -> PartialLabels:
    """Read an ``index,label`` CSV into PartialLabels (−1 = unlabeled)."""
    return PartialLabels(_read_indexed_csv(path, "label"))


def load_ground_truth(path) -> np.ndarray:
    """Read an ``index,label`` CSV of nonnegative ground-truth class ids."""
    values = _read_indexed_csv(path, "label")
    if np.any(values < 0):
        raise InputError(f"{path}: ground truth labels must be nonnegative")
    return values


def load_groups(path) -> np.ndarray:
    """Read an ``index,group`` CSV of nonnegative group ids."""
    values = _read_indexed_csv(path, "group")
    if np.any(values < 0):
        raise InputError(f"{path}: group ids must be nonnegative")
    return values


def _write_indexed_csv(path, values, value_column: str) -> None:
    values = np.asarray(values, dtype=np.int64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", value_column])
        for idx, value in enumerate(values.tolist()):
            writer.writerow([idx, value])


def save_labels(path, labels) -> None:
    arr = labels.labels if isinstance(labels, PartialLabels) else labels
    _write_indexed_csv(path, arr, "label")


def save_groups(path, groups) -> None:
    _write_indexed_csv(path, groups, "group")
