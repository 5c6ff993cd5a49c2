"""MAD-normalised Manhattan distance and its per-feature weighted form."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import FeatureSpec

__all__ = ["WeightVector", "mad_distance", "weighted_distance", "inverse_mads"]


@dataclass(frozen=True)
class WeightVector:
    """Non-negative per-feature multipliers on the distance terms.

    Immutable features carry weight 0 and the mutable entries average 1.
    Build instances with :meth:`uniform` or :meth:`normalized`; the plain
    constructor only validates.
    """

    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if theta.ndim != 1:
            raise ValueError("theta must be a vector")
        if not np.all(np.isfinite(theta)) or np.any(theta < 0):
            raise ValueError("theta entries must be finite and >= 0")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    def __len__(self):
        return self.theta.size

    @classmethod
    def uniform(cls, specs: Sequence[FeatureSpec]) -> "WeightVector":
        return cls.normalized(np.ones(len(specs)), specs)

    @classmethod
    def normalized(cls, raw, specs: Sequence[FeatureSpec]) -> "WeightVector":
        """Zero ``raw`` on immutable features and rescale to mean 1 over the rest."""
        raw = np.asarray(raw, dtype=float)
        if raw.shape != (len(specs),):
            raise ValueError("weight vector length must match the number of features")
        mutable = np.array([s.mutable for s in specs], dtype=bool)
        theta = np.where(mutable, raw, 0.0)
        if mutable.any():
            total = theta[mutable].sum()
            if total <= 0 or not np.isfinite(total):
                raise ValueError("weights over mutable features must have positive finite sum")
            theta = theta * (mutable.sum() / total)
        return cls(theta)

    def is_normalized(self, specs: Sequence[FeatureSpec], atol: float = 1e-9) -> bool:
        mutable = np.array([s.mutable for s in specs], dtype=bool)
        if np.any(self.theta[~mutable] != 0):
            return False
        return not mutable.any() or abs(self.theta[mutable].mean() - 1.0) <= atol

    def to_list(self) -> list[float]:
        return self.theta.tolist()


def inverse_mads(specs: Sequence[FeatureSpec]) -> np.ndarray:
    """``1 / MAD_j``, with 0 on features whose MAD is 0 (they are immutable)."""
    mads = np.array([s.mad for s in specs], dtype=float)
    out = np.zeros_like(mads)
    np.divide(1.0, mads, out=out, where=mads > 0)
    return out


def _terms(x, x_prime, specs) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    x_prime = np.asarray(x_prime, dtype=float)
    if x.shape != x_prime.shape or x.shape != (len(specs),):
        raise ValueError("x, x_prime and specs must have equal lengths")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(x_prime))):
        raise ValueError("distance inputs must be finite")
    delta = np.abs(x - x_prime)
    inv = inverse_mads(specs)
    if np.any((inv == 0) & (delta != 0)):
        raise ValueError("a feature with zero MAD differs between x and x_prime")
    return delta * inv


def mad_distance(x, x_prime, specs: Sequence[FeatureSpec]) -> float:
    """Sum over features of ``|x_j - x'_j| / MAD_j``."""
    return float(_terms(x, x_prime, specs).sum())


def weighted_distance(x, x_prime, specs: Sequence[FeatureSpec], theta) -> float:
    """:func:`mad_distance` with each term scaled by ``theta_j``.

    ``theta`` may be a :class:`WeightVector` or a raw non-negative array.
    """
    if not isinstance(theta, WeightVector):
        theta = WeightVector(theta)
    if len(theta) != len(specs):
        raise ValueError("theta length must match the number of features")
    return float((_terms(x, x_prime, specs) * theta.theta).sum())
