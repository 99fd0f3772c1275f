"""Clustering-accuracy evaluation with optimal prediction-to-class matching.

Accuracy is measured on the unlabeled instances only. A single optimal
matching between predicted group ids and true class ids (maximizing the
matched instance count over the padded contingency matrix) is computed
once; All/Old/New accuracies are the matched fractions under that one
matching, where Old covers unlabeled instances whose true class is known.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .data import PartialLabels
from .errors import InputError


@dataclass(frozen=True)
class AccReport:
    """All/Old/New clustering accuracies plus the class-count estimate."""

    all_acc: float
    old_acc: float | None
    new_acc: float | None
    num_predicted_groups: int
    num_true_classes: int
    class_count_error_rate: float

    def __post_init__(self):
        for name in ("all_acc", "old_acc", "new_acc"):
            value = getattr(self, name)
            if value is not None and not (0.0 <= value <= 1.0):
                raise InputError(f"{name} must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "all_acc": self.all_acc,
            "old_acc": self.old_acc,
            "new_acc": self.new_acc,
            "num_predicted_groups": self.num_predicted_groups,
            "num_true_classes": self.num_true_classes,
            "class_count_error_rate": self.class_count_error_rate,
        }


def _as_ids(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64)
    if arr.ndim != 1 or arr.size == 0:
        raise InputError(f"{name} must be a non-empty 1-D array")
    if np.any(arr < 0):
        raise InputError(f"{name} ids must be nonnegative")
    return arr


def hungarian_match(pred, truth) -> dict[int, int]:
    """Best prediction-id to truth-id mapping by total matched instances.

    The contingency matrix is padded with zeros to square when the id counts
    differ; padded rows and columns produce no mapping entries.
    """
    pred = _as_ids(pred, "pred")
    truth = _as_ids(truth, "truth")
    if pred.size != truth.size:
        raise InputError("pred and truth must have equal length")
    pred_ids, pi = np.unique(pred, return_inverse=True)
    truth_ids, ti = np.unique(truth, return_inverse=True)
    side = max(pred_ids.size, truth_ids.size)
    table = np.zeros((side, side), dtype=np.int64)
    np.add.at(table, (pi, ti), 1)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return {
        int(pred_ids[r]): int(truth_ids[c])
        for r, c in zip(rows, cols)
        if r < pred_ids.size and c < truth_ids.size
    }


def matched_count(pred, truth, mapping: dict[int, int]) -> int:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    mapped = np.array([mapping.get(int(p), -1) for p in pred], dtype=np.int64)
    return int(np.count_nonzero(mapped == truth))


def acc_report(pred, truth, labels: PartialLabels, known_class_set=None) -> AccReport:
    """Evaluate predicted groups against ground truth on the unlabeled subset.

    ``known_class_set`` is the set of ground-truth class ids considered
    known; when omitted it is derived as the truth classes of the labeled
    instances.
    """
    pred = _as_ids(pred, "pred")
    truth = _as_ids(truth, "truth")
    if pred.size != truth.size or pred.size != labels.num_instances:
        raise InputError("pred, truth, and labels must have equal length")
    unlabeled = labels.unlabeled_mask
    m = int(unlabeled.sum())
    if m == 0:
        raise InputError("no unlabeled instances to evaluate")

    if known_class_set is None:
        known_class_set = set(np.unique(truth[labels.labeled_mask]).tolist())
    known_class_set = {int(c) for c in known_class_set}

    pred_u, truth_u = pred[unlabeled], truth[unlabeled]
    mapping = hungarian_match(pred_u, truth_u)
    mapped = np.array([mapping.get(int(p), -1) for p in pred_u], dtype=np.int64)
    hits = mapped == truth_u

    old_mask = np.isin(truth_u, sorted(known_class_set))
    all_acc = float(hits.mean())
    old_acc = float(hits[old_mask].mean()) if old_mask.any() else None
    new_acc = float(hits[~old_mask].mean()) if (~old_mask).any() else None

    num_pred = int(np.unique(pred).size)
    num_true = int(np.unique(truth).size)
    return AccReport(
        all_acc=all_acc,
        old_acc=old_acc,
        new_acc=new_acc,
        num_predicted_groups=num_pred,
        num_true_classes=num_true,
        class_count_error_rate=abs(num_pred - num_true) / num_true,
    )
