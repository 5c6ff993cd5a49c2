"""Tabular credit data: CSV ingestion, preprocessing, synthetic generation.

A :class:`Dataset` is the training population every other module leans on.
MAD scales, ANOVA importances and nearest-neighbour weights are all computed
from it, and counterfactual search draws its starting points from its rows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

__all__ = [
    "FeatureSpec",
    "Dataset",
    "compute_mad",
    "mad_fallback",
    "infer_decimals",
    "build_specs",
    "load_csv",
    "load_metadata",
    "preprocess",
    "gen_synthetic",
    "MAD_FALLBACK_FACTOR",
]

# Consistency constant relating mean absolute deviation to a Gaussian sigma.
MAD_FALLBACK_FACTOR = 1.4826


@dataclass(frozen=True)
class FeatureSpec:
    """Per-feature metadata used to constrain and normalise search.

    ``mad`` is the effective scale used by the distance. It equals the plain
    median absolute deviation unless ``mad_fallback_used`` is set. ``decimals``
    is the decimal granularity observed in the training data and only
    affects how values are printed.
    """

    name: str
    lower: float
    upper: float
    mutable: bool = True
    mad: float = 1.0
    mad_fallback_used: bool = False
    decimals: int = 6

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValueError(f"feature {self.name!r}: bounds must be finite")
        if self.lower > self.upper:
            raise ValueError(
                f"feature {self.name!r}: lower bound {self.lower} exceeds upper {self.upper}"
            )
        if not math.isfinite(self.mad) or self.mad < 0:
            raise ValueError(f"feature {self.name!r}: MAD must be finite and >= 0")
        if self.mutable and self.mad <= 0:
            raise ValueError(f"feature {self.name!r}: mutable feature needs MAD > 0")


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, binary targets (1 = accepted) and feature metadata."""

    records: np.ndarray
    targets: np.ndarray
    specs: tuple[FeatureSpec, ...] = field(default=())

    def __post_init__(self):
        records = np.array(self.records, dtype=float)
        targets = np.array(self.targets)
        if records.ndim != 2:
            raise ValueError("records must be a 2-D matrix")
        if not np.all(np.isfinite(records)):
            raise ValueError("records contain missing or non-finite values")
        if targets.shape != (records.shape[0],):
            raise ValueError("targets must have one entry per record")
        if not np.all((targets == 0) | (targets == 1)):
            raise ValueError("targets must contain only 0 and 1")
        targets = targets.astype(np.int64)
        if targets.min() == targets.max():
            raise ValueError("targets must contain both classes")
        specs = tuple(self.specs) if self.specs else build_specs(records)
        if len(specs) != records.shape[1]:
            raise ValueError("one FeatureSpec is required per column")
        records.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "records", records)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "specs", specs)

    @property
    def n(self) -> int:
        return self.records.shape[0]

    @property
    def p(self) -> int:
        return self.records.shape[1]

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.specs]

    @property
    def mads(self) -> np.ndarray:
        return np.array([s.mad for s in self.specs])

    @property
    def lower(self) -> np.ndarray:
        return np.array([s.lower for s in self.specs])

    @property
    def upper(self) -> np.ndarray:
        return np.array([s.upper for s in self.specs])

    @property
    def mutable(self) -> np.ndarray:
        return np.array([s.mutable for s in self.specs], dtype=bool)

    def subset(self, rows) -> "Dataset":
        """Rows ``rows`` with the same feature metadata (MAD is not recomputed)."""
        return Dataset(self.records[rows], self.targets[rows], self.specs)

    def with_specs(self, specs: Sequence[FeatureSpec]) -> "Dataset":
        return Dataset(self.records, self.targets, tuple(specs))


def compute_mad(column) -> float:
    """Median absolute deviation from the median.

    Even-length medians average the two middle values. A constant column
    returns 0; choosing a replacement scale is the caller's job.
    """
    col = np.asarray(column, dtype=float).ravel()
    if col.size == 0:
        raise ValueError("compute_mad needs a non-empty column")
    return float(np.median(np.abs(col - np.median(col))))


def mad_fallback(column) -> float:
    """Replacement scale for a non-constant column whose MAD is zero."""
    col = np.asarray(column, dtype=float).ravel()
    return float(MAD_FALLBACK_FACTOR * np.mean(np.abs(col - col.mean())))


def infer_decimals(column, max_decimals: int = 6) -> int:
    """Smallest number of decimals that represents every value of ``column``."""
    col = np.asarray(column, dtype=float).ravel()
    for k in range(max_decimals + 1):
        scaled = col * 10.0**k
        if np.allclose(scaled, np.round(scaled), rtol=0, atol=1e-6):
            return k
    return max_decimals


def _column_spec(name, col, lower=None, upper=None, mutable=True) -> FeatureSpec:
    mad = compute_mad(col)
    fallback = False
    if mad == 0:
        fallback = True
        if np.ptp(col) == 0:
            # a constant column carries no information to search over
            mutable = False
        else:
            mad = mad_fallback(col)
    return FeatureSpec(
        name=str(name),
        lower=float(col.min() if lower is None else lower),
        upper=float(col.max() if upper is None else upper),
        mutable=bool(mutable),
        mad=mad,
        mad_fallback_used=fallback,
        decimals=infer_decimals(col),
    )


def build_specs(
    records,
    names: Sequence[str] | None = None,
    metadata: Mapping[str, Mapping] | None = None,
) -> tuple[FeatureSpec, ...]:
    """Infer a :class:`FeatureSpec` for every column of ``records``.

    Bounds default to the column min/max and every feature is mutable unless
    ``metadata`` (``{name: {"lower", "upper", "mutable"}}``) says otherwise.
    """
    records = np.asarray(records, dtype=float)
    if names is None:
        names = [f"x{j}" for j in range(records.shape[1])]
    metadata = metadata or {}
    unknown = set(metadata) - set(names)
    if unknown:
        raise ValueError(f"metadata names unknown features: {sorted(unknown)}")
    specs = []
    for j, name in enumerate(names):
        meta = metadata.get(name, {})
        specs.append(
            _column_spec(
                name,
                records[:, j],
                lower=meta.get("lower"),
                upper=meta.get("upper"),
                mutable=meta.get("mutable", True),
            )
        )
    return tuple(specs)


def load_metadata(path) -> dict[str, dict]:
    """Read the optional per-feature JSON file: ``{name: {lower, upper, mutable}}``."""
    with open(path, encoding="utf-8") as fh:
        meta = json.load(fh)
    if not isinstance(meta, dict):
        raise ValueError("feature metadata must be a JSON object keyed by feature name")
    allowed = {"lower", "upper", "mutable"}
    for name, entry in meta.items():
        if not isinstance(entry, dict) or set(entry) - allowed:
            raise ValueError(f"metadata for {name!r} may only set {sorted(allowed)}")
    return meta


def _encode_target(values: pd.Series, positive_label=None) -> np.ndarray:
    classes = sorted(pd.unique(values).tolist(), key=str)
    if len(classes) != 2:
        raise ValueError(f"target column must hold exactly two classes, found {len(classes)}")
    if positive_label is None:
        if set(classes) <= {0, 1}:
            positive_label = 1
        else:
            try:
                positive_label = max(classes)
            except TypeError:
                positive_label = classes[-1]
    elif positive_label not in classes:
        # CLI passes labels as strings; match on their text form
        matches = [c for c in classes if str(c) == str(positive_label)]
        if not matches:
            raise ValueError(f"positive label {positive_label!r} not among {classes}")
        positive_label = matches[0]
    return (values == positive_label).to_numpy().astype(np.int64)


def load_csv(
    path,
    target_column: str,
    metadata: Mapping[str, Mapping] | None = None,
    positive_label=None,
) -> Dataset:
    """Read a header-ful, comma-separated UTF-8 file into a :class:`Dataset`.

    The target column must hold exactly two distinct values. Numeric 0/1 is
    used as-is; otherwise the larger value (or the last one in text order,
    e.g. ``Good`` over ``Bad``) is the accepted class unless
    ``positive_label`` is given.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    frame = pd.read_csv(path, encoding="utf-8", skipinitialspace=True)
    if target_column not in frame.columns:
        raise ValueError(f"target column {target_column!r} not in {list(frame.columns)}")
    if frame.isna().to_numpy().any():
        raise ValueError("missing values are not supported; clean the file first")
    targets = _encode_target(frame[target_column], positive_label)
    features = frame.drop(columns=[target_column])
    try:
        records = features.apply(pd.to_numeric, errors="raise").to_numpy(dtype=float)
    except (ValueError, TypeError) as exc:
        raise ValueError(f"non-numeric cell in {path}: {exc}") from None
    counts = np.bincount(targets, minlength=2)
    if counts.min() < 2:
        raise ValueError(f"need at least 2 rows per class, got {counts.tolist()}")
    specs = build_specs(records, list(map(str, features.columns)), metadata)
    return Dataset(records, targets, specs)


def _pearson_abs(records: np.ndarray) -> np.ndarray:
    centred = records - records.mean(axis=0)
    norms = np.sqrt((centred**2).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = (centred.T @ centred) / np.outer(norms, norms)
    # constant columns have no defined correlation
    return np.nan_to_num(np.abs(corr), nan=0.0)


def preprocess(
    raw: Dataset,
    corr_threshold: float = 0.95,
    drop_sentinel: float | None = None,
) -> Dataset:
    """Drop duplicate rows and highly correlated columns.

    Rows identical in features and target are collapsed to their first
    occurrence. Column ``j`` is dropped when ``|r| >= corr_threshold`` against
    any earlier column that survived. If ``drop_sentinel`` is given, rows whose
    every feature equals it (e.g. HELOC's ``-9`` "no bureau record" rows) go too.
    User bounds and mutability flags of surviving columns are kept; MAD is
    recomputed on the surviving rows.
    """
    if not 0 < corr_threshold <= 1:
        raise ValueError("corr_threshold must lie in (0, 1]")
    records, targets = raw.records, raw.targets
    if drop_sentinel is not None:
        keep = ~np.all(records == drop_sentinel, axis=1)
        records, targets = records[keep], targets[keep]
    joined = np.column_stack([records, targets])
    _, first = np.unique(joined, axis=0, return_index=True)
    rows = np.sort(first)
    records, targets = records[rows], targets[rows]

    corr = _pearson_abs(records)
    kept: list[int] = []
    for j in range(records.shape[1]):
        if all(corr[i, j] < corr_threshold for i in kept):
            kept.append(j)
    if not kept:
        raise ValueError("correlation filter dropped every feature")
    records = records[:, kept]
    specs = []
    for new_j, old_j in enumerate(kept):
        old = raw.specs[old_j]
        spec = _column_spec(old.name, records[:, new_j], old.lower, old.upper, old.mutable)
        specs.append(spec)
    return Dataset(records, targets, tuple(specs))


def gen_synthetic(
    n: int = 2000,
    p: int = 20,
    seed: int = 0,
    n_informative: int | None = None,
    separation: float = 2.5,
) -> Dataset:
    """Two Gaussian class clusters that stand in for a credit dataset.

    The first ``n_informative`` columns (default ``max(1, p // 4)``) carry
    class-dependent means. Their shifts decay geometrically, and the total
    standardised distance between class means is ``separation``. The
    remaining columns are uniform noise. Columns get heterogeneous units so
    MAD normalisation matters, and roughly half the rows are accepted.
    """
    if n < 100 or p < 2:
        raise ValueError("gen_synthetic needs n >= 100 and p >= 2")
    if n_informative is None:
        n_informative = max(1, p // 4)
    if not 1 <= n_informative <= p:
        raise ValueError("n_informative must lie in [1, p]")
    rng = np.random.default_rng(seed)
    targets = rng.permutation(np.arange(n) % 2)

    shift = 0.7 ** np.arange(n_informative)
    shift *= separation / np.linalg.norm(shift)
    z = np.empty((n, p))
    z[:, :n_informative] = rng.standard_normal((n, n_informative))
    z[:, :n_informative] += np.outer(targets - 0.5, shift)
    z[:, n_informative:] = rng.uniform(-1.0, 1.0, size=(n, p - n_informative))

    # per-column units, e.g. balances in the thousands next to small counts
    scale = 10.0 ** rng.integers(0, 4, size=p)
    offset = np.round(rng.uniform(0, 5, size=p) * scale, 2)
    records = z * scale + offset
    names = [f"f{j:02d}" for j in range(p)]
    return Dataset(records, targets, build_specs(records, names))

