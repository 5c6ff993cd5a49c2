"""Per-feature distance weights that favour some features over others.

Two sources of evidence are turned into weights:

* global importance, the one-way ANOVA F statistic of each feature against
  the class label;
* local history, how much the ``k`` nearest records of the desired class
  differ from the instance on each feature.

High importance or high observed change means a feature is cheap to move,
so it receives a *low* weight. Both go through the same bounded, monotone
decreasing map ``1 / (normalised + smoothing)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import Dataset
from .distance import WeightVector, inverse_mads

__all__ = [
    "DEFAULT_K",
    "DEFAULT_SMOOTHING",
    "ImportanceProfile",
    "anova_f",
    "anova_f_all",
    "inverse_transform",
    "complement_transform",
    "global_theta",
    "importance_profile",
    "nearest_neighbors",
    "knn_changes",
    "knn_theta",
]

DEFAULT_K = 20
DEFAULT_SMOOTHING = 0.1

Transform = Callable[[np.ndarray, float], np.ndarray]


def anova_f(data: Dataset, feature: int) -> float:
    """One-way F statistic of column ``feature`` with the two classes as groups.

    Returns ``inf`` when both classes are constant but differ, and 0 for a
    constant column.
    """
    if data.n < 3:
        raise ValueError("ANOVA needs at least 3 records")
    col = data.records[:, feature]
    y = data.targets
    grand = col.mean()
    between = 0.0
    within = 0.0
    for cls in (0, 1):
        group = col[y == cls]
        if group.size == 0:
            raise ValueError("ANOVA needs both classes present")
        m = group.mean()
        between += group.size * (m - grand) ** 2
        within += float(((group - m) ** 2).sum())
    df_between, df_within = 1, data.n - 2
    if within == 0:
        return float("inf") if between > 0 else 0.0
    return float((between / df_between) / (within / df_within))


def anova_f_all(data: Dataset) -> np.ndarray:
    """F value per feature, with ``inf`` replaced by the largest finite F."""
    f = np.array([anova_f(data, j) for j in range(data.p)])
    finite = np.isfinite(f)
    if not finite.all():
        cap = f[finite].max() if finite.any() else 1.0
        f = np.where(finite, f, cap)
    return f


def inverse_transform(normalised: np.ndarray, smoothing: float) -> np.ndarray:
    return 1.0 / (normalised + smoothing)


def complement_transform(normalised: np.ndarray, smoothing: float) -> np.ndarray:
    """``1 - v + smoothing``; a linear alternative to :func:`inverse_transform`."""
    return 1.0 - normalised + smoothing


def _theta_from_scores(
    scores: np.ndarray,
    data: Dataset,
    smoothing: float,
    transform: Transform,
) -> WeightVector:
    mutable = data.mutable
    if not mutable.any():
        raise ValueError("no mutable features to weight")
    s = scores[mutable]
    lo, hi = s.min(), s.max()
    if hi - lo <= 0:
        return WeightVector.uniform(data.specs)
    raw = np.zeros(data.p)
    raw[mutable] = transform((s - lo) / (hi - lo), smoothing)
    return WeightVector.normalized(raw, data.specs)


@dataclass(frozen=True)
class ImportanceProfile:
    f_values: np.ndarray
    theta_global: WeightVector

    def to_dict(self, names=None):
        names = names or [f"x{j}" for j in range(self.f_values.size)]
        return {
            "f_values": dict(zip(names, self.f_values.tolist())),
            "theta": dict(zip(names, self.theta_global.to_list())),
        }


def importance_profile(
    data: Dataset,
    smoothing: float = DEFAULT_SMOOTHING,
    transform: Transform = inverse_transform,
) -> ImportanceProfile:
    f = anova_f_all(data)
    return ImportanceProfile(f, _theta_from_scores(f, data, smoothing, transform))


def global_theta(
    data: Dataset,
    smoothing: float = DEFAULT_SMOOTHING,
    transform: Transform = inverse_transform,
) -> WeightVector:
    """Weights that make features with a high ANOVA F cheap to change."""
    return importance_profile(data, smoothing, transform).theta_global


def nearest_neighbors(data: Dataset, x, desired_class: int, k: int = DEFAULT_K) -> np.ndarray:
    """Row indices of the ``k`` closest ``desired_class`` records to ``x``.

    Closeness is the MAD-normalised Manhattan distance; ties go to the
    lower row index.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    rows = np.flatnonzero(data.targets == desired_class)
    if rows.size < k:
        raise ValueError(f"only {rows.size} records of class {desired_class}, need k={k}")
    x = np.asarray(x, dtype=float)
    dist = np.abs(data.records[rows] - x) @ inverse_mads(data.specs)
    order = np.lexsort((rows, dist))
    return rows[order[:k]]


def knn_changes(data: Dataset, x, desired_class: int, k: int = DEFAULT_K) -> np.ndarray:
    """Mean MAD-normalised absolute difference between ``x`` and its neighbours."""
    nbrs = nearest_neighbors(data, x, desired_class, k)
    diff = np.abs(data.records[nbrs] - np.asarray(x, dtype=float))
    return diff.mean(axis=0) * inverse_mads(data.specs)


def knn_theta(
    data: Dataset,
    x,
    desired_class: int,
    k: int = DEFAULT_K,
    smoothing: float = DEFAULT_SMOOTHING,
    transform: Transform = inverse_transform,
) -> WeightVector:
    """Weights that make features on which nearby successful records differ cheap."""
    delta = knn_changes(data, x, desired_class, k)
    return _theta_from_scores(delta, data, smoothing, transform)
