"""Counterfactual search: escalate the prediction-loss weight until the target is hit.

For an instance ``x`` and target score ``y'`` the search minimises::

    lam * (score(x') - y')**2 + d(x, x')

with Nelder-Mead, starting from a random training record of the desired
class. While ``|score(x') - y'| > epsilon`` the weight ``lam`` grows by a
fixed additive step and the search resumes from the current ``x'``. The
whole procedure is repeated ``restarts`` times and the closest valid
result is kept.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import Dataset, FeatureSpec
from .distance import WeightVector, inverse_mads, mad_distance, weighted_distance
from .models import Predictor
from .optimizer import NelderMeadPool

__all__ = [
    "CfConfig",
    "CounterfactualResult",
    "change_thresholds",
    "loss",
    "generate",
    "generate_many",
    "generate_negative",
    "generate_positive",
    "explain_auto",
]


@dataclass(frozen=True)
class CfConfig:
    epsilon: float = 0.05
    lambda_init: float = 0.0
    alpha: float = 0.5
    lambda_max: float = 1e4
    restarts: int = 5
    theta: WeightVector | None = None
    seed: int = 0
    margin: float | None = None  # negative-mode overshoot past 0.5; None means epsilon
    simplex_scale: float = 0.5  # initial simplex edge, in MAD units
    f_tol: float = 1e-7
    x_tol: float = 1e-7
    max_iter: int | None = None
    nm_restarts: int = 2
    skip_plateaus: bool = True

    def __post_init__(self):
        if not 0 < self.epsilon < 0.5:
            raise ValueError("epsilon must lie in (0, 0.5)")
        if self.lambda_init < 0:
            raise ValueError("lambda_init must be >= 0")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.lambda_max <= self.lambda_init:
            raise ValueError("lambda_max must exceed lambda_init")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.theta is not None and not isinstance(self.theta, WeightVector):
            object.__setattr__(self, "theta", WeightVector(self.theta))

    def with_theta(self, theta: WeightVector | None) -> "CfConfig":
        return replace(self, theta=theta)


@dataclass(frozen=True)
class CounterfactualResult:
    x_original: np.ndarray
    x_cf: np.ndarray
    y_target: float
    y_achieved: float
    distance: float
    lambda_final: float
    deltas: np.ndarray
    size: int
    valid: bool
    epsilon: float
    kind: str = "target"
    trace: tuple[tuple[float, float], ...] = field(default=())
    restart: int = -1

    def to_dict(self, names: Sequence[str] | None = None) -> dict:
        names = list(names) if names is not None else [f"x{j}" for j in range(self.x_cf.size)]
        return {
            "kind": self.kind,
            "features": names,
            "x_original": self.x_original.tolist(),
            "x_cf": self.x_cf.tolist(),
            "deltas": self.deltas.tolist(),
            "y_target": self.y_target,
            "y_achieved": self.y_achieved,
            "epsilon": self.epsilon,
            "distance": self.distance,
            "lambda_final": self.lambda_final,
            "size": self.size,
            "valid": self.valid,
            "restart": self.restart,
            "trace": [list(t) for t in self.trace],
        }


def change_thresholds(specs: Sequence[FeatureSpec]) -> np.ndarray:
    """Per-feature level above which a change counts: ``max(1e-3 * MAD_j, 1e-9)``."""
    return np.maximum(1e-3 * np.array([s.mad for s in specs]), 1e-9)


def _size(deltas, specs) -> int:
    return int(np.count_nonzero(np.abs(deltas) > change_thresholds(specs)))


def loss(x, x_prime, y_target, lam, model: Predictor, specs, theta=None) -> float:
    """``lam * (score(x') - y')**2 + d(x, x')`` with the (weighted) MAD distance."""
    s = model.score(np.asarray(x_prime, dtype=float))
    if not np.isfinite(s):
        raise ValueError("model returned a non-finite score")
    if theta is None:
        d = mad_distance(x, x_prime, specs)
    else:
        d = weighted_distance(x, x_prime, specs, theta)
    return lam * (s - y_target) ** 2 + d


def _desired_class(y_target: float, current: int) -> int:
    if y_target > 0.5:
        return 1
    if y_target < 0.5:
        return 0
    return 1 - current


def _result(x, x_cf, y_target, s, dist, lam, specs, eps, kind, trace, restart):
    deltas = x_cf - x
    return CounterfactualResult(
        x_original=x.copy(),
        x_cf=x_cf,
        y_target=float(y_target),
        y_achieved=float(s),
        distance=float(dist),
        lambda_final=float(lam),
        deltas=deltas,
        size=_size(deltas, specs),
        valid=bool(abs(s - y_target) <= eps),
        epsilon=eps,
        kind=kind,
        trace=tuple(trace),
        restart=restart,
    )


# largest per-feature move, in MAD units, of a re-optimisation that changed nothing
SETTLED = 1e-6


def _probe_steps(model, X, s, px, py, pc, base, alpha, free, lower, upper, h) -> np.ndarray:
    """Smallest ``n >= 1`` such that some axis probe beats ``X`` at ``base + n * alpha``.

    Probes are ``X +- h_j e_j``. This is only a first guess for where the
    search leaves a settled ``X``; where no weight makes a probe win, 1.
    """
    k, p = X.shape
    idx = np.flatnonzero(free)
    nf = idx.size
    Z = np.repeat(X[:, None, :], 2 * nf, axis=1)
    cols = np.arange(nf)
    Z[:, cols, idx] = np.minimum(X[:, idx] + h[idx], upper[idx])
    Z[:, nf + cols, idx] = np.maximum(X[:, idx] - h[idx], lower[idx])
    sz = np.asarray(model.score(Z.reshape(k * 2 * nf, p)), dtype=float).reshape(k, 2 * nf)
    d0 = (np.abs(X - px) * pc).sum(axis=1)
    dz = (np.abs(Z - px[:, None, :]) * pc[:, None, :]).sum(axis=2)
    gain = (s - py)[:, None] ** 2 - (sz - py[:, None]) ** 2  # prediction-loss drop per unit weight
    with np.errstate(divide="ignore", invalid="ignore"):
        thr = np.where(gain > 0, (dz - d0[:, None]) / gain, np.inf).min(axis=1)
    n = np.ones(k, dtype=np.int64)
    ok = np.isfinite(thr)
    n[ok] = np.maximum(1, np.floor((thr[ok] - base[ok]) / alpha).astype(np.int64) + 1)
    return n


def generate(
    x,
    y_target: float,
    model: Predictor,
    data: Dataset,
    cfg: CfConfig = CfConfig(),
    kind: str = "target",
) -> CounterfactualResult:
    """Closest ``x'`` (over restarts) with ``|score(x') - y_target| <= epsilon``.

    If no restart reaches the tolerance before ``lambda_max``, the result
    closest to the target score is returned with ``valid=False``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (data.p,):
        raise ValueError(f"x must have {data.p} features")
    return generate_many(x[None, :], [y_target], model, data, cfg, kinds=[kind])[0]


def generate_many(
    X,
    y_targets,
    model: Predictor,
    data: Dataset,
    cfg: CfConfig = CfConfig(),
    thetas=None,
    kinds=None,
) -> list[CounterfactualResult]:
    """:func:`generate` for every row of ``X``, searched together.

    ``thetas`` optionally gives one :class:`WeightVector` per row and
    overrides ``cfg.theta``. Each row draws its starting records from its
    own generator seeded with ``cfg.seed``, so a row's result does not
    depend on which other rows share the call.
    """
    specs = data.specs
    eps = cfg.epsilon
    X = np.array(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != data.p:
        raise ValueError(f"X must be a matrix with {data.p} columns")
    n = X.shape[0]
    y_targets = np.broadcast_to(np.asarray(y_targets, dtype=float), (n,))
    kinds = ["target"] * n if kinds is None else list(kinds)
    lower, upper, mutable = data.lower, data.upper, data.mutable
    if np.any(X < lower) or np.any(X > upper):
        raise ValueError("x lies outside the feature bounds")
    if np.any((y_targets < eps) | (y_targets > 1 - eps)):
        raise ValueError("y_target must lie in [epsilon, 1 - epsilon]")
    if not mutable.any():
        raise ValueError("no mutable features: nothing can change")

    inv = inverse_mads(specs)
    coefs = np.empty((n, data.p))
    for i in range(n):
        theta = cfg.theta if thetas is None else thetas[i]
        if theta is None:
            coefs[i] = inv
        else:
            if len(theta) != data.p:
                raise ValueError("theta length must match the number of features")
            coefs[i] = inv * theta.theta

    s0 = np.array([model.score(row) for row in X])
    results: list[CounterfactualResult | None] = [None] * n
    todo = []
    for i in range(n):
        if abs(s0[i] - y_targets[i]) <= eps:
            results[i] = _result(
                X[i], X[i].copy(), y_targets[i], s0[i], 0.0, cfg.lambda_init,
                specs, eps, kinds[i], (), -1,
            )
        else:
            todo.append(i)
    if not todo:
        return results

    # one problem per (instance, restart)
    owner, starts = [], []
    for i in todo:
        rng = np.random.default_rng(cfg.seed)
        pool = np.flatnonzero(data.targets == _desired_class(y_targets[i], int(s0[i] >= 0.5)))
        for _ in range(cfg.restarts):
            start = data.records[pool[rng.integers(pool.size)]].copy()
            start[~mutable] = X[i][~mutable]
            starts.append(np.clip(start, lower, upper))
            owner.append(i)
    owner = np.array(owner)
    cur = np.array(starts)
    px, py, pc = X[owner], y_targets[owner], coefs[owner]
    lam = np.full(owner.size, cfg.lambda_init)

    frozen = np.flatnonzero(~mutable)
    traces: list[list[tuple[float, float]]] = [[] for _ in range(owner.size)]
    G_ = owner.size
    alpha, lam_max = cfg.alpha, cfg.lambda_max
    # Once x' stops moving, stepping lambda one alpha at a time reruns the
    # same search until the weight is large enough to pull x' away. Such a
    # problem instead searches the grid base + n * alpha for the first n
    # whose run leaves x' (probe guess, doubling, then bisection); that run
    # is exactly the step the plain schedule would eventually take.
    searching = np.zeros(G_, dtype=bool)
    base = np.zeros(G_)
    lo = np.zeros(G_, dtype=np.int64)
    hi = np.full(G_, -1, dtype=np.int64)
    trial = np.zeros(G_, dtype=np.int64)
    n_cap = np.zeros(G_, dtype=np.int64)
    first = np.zeros(G_, dtype=bool)
    hi_x = np.empty_like(cur)
    hi_s = np.empty(G_)
    weight = lam.copy()
    f_start = np.empty(G_)

    def objective(rows, g):
        s = np.asarray(model.score(rows), dtype=float)
        return weight[g] * (s - py[g]) ** 2 + (np.abs(rows - px[g]) * pc[g]).sum(axis=1)

    nm = NelderMeadPool(
        objective, data.p, G_, frozen,
        f_tol=cfg.f_tol, x_tol=cfg.x_tol, max_iter=cfg.max_iter, max_restarts=cfg.nm_restarts,
    )

    def launch(gs):
        # each problem starts its next run as soon as its previous one ends
        weight[gs] = np.where(searching[gs], base[gs] + trial[gs] * alpha, lam[gs])
        f_start[gs] = objective(cur[gs], gs)
        nm.add(gs, cur[gs], lower, upper, data.mads, cfg.simplex_scale)

    launch(np.arange(G_))
    while nm.active:
        res = nm.step()
        batch = res.keys
        if not batch.size:
            continue
        scores = np.asarray(model.score(res.x_opt), dtype=float)
        moved = (np.abs(res.x_opt - cur[batch]) * inv).max(axis=1)
        miss = np.abs(scores - py[batch]) > eps
        settled = miss & (moved <= SETTLED)
        nxt = []

        def step(g):
            lam[g] += alpha
            if lam[g] <= lam_max:
                nxt.append(g)

        new_search = []
        for j, g in enumerate(batch):
            if not searching[g]:
                cur[g] = res.x_opt[j]
                traces[g].append((float(lam[g]), float(scores[j])))
                if not miss[j]:
                    continue
                if cfg.skip_plateaus and settled[j] and f_start[g] - res.f_opt[j] <= cfg.f_tol:
                    new_search.append((g, scores[j]))
                else:
                    step(g)
                continue
            first_result = first[g]
            first[g] = False
            if settled[j]:
                lo[g] = trial[g]
            else:
                hi[g], hi_x[g], hi_s[g] = trial[g], res.x_opt[j], scores[j]
            if hi[g] < 0:
                if lo[g] >= n_cap[g]:
                    # the cap is reached without x' ever moving
                    searching[g] = False
                    lam[g] = base[g] + lo[g] * alpha
                    traces[g].append((float(lam[g]), float(scores[j])))
                    continue
                trial[g] = min(max(2 * lo[g], lo[g] + 1), n_cap[g])
            elif hi[g] - lo[g] == 1:
                searching[g] = False
                lam[g] = base[g] + hi[g] * alpha
                cur[g] = hi_x[g]
                traces[g].append((float(lam[g]), float(hi_s[g])))
                if abs(hi_s[g] - py[g]) > eps:
                    step(g)
                continue
            elif first_result:
                # the guess is often exact: confirm the step just below it
                trial[g] = hi[g] - 1
            else:
                trial[g] = (lo[g] + hi[g]) // 2
            nxt.append(g)

        if new_search:
            gs = np.array([g for g, _ in new_search])
            ss = np.array([s for _, s in new_search])
            base[gs] = lam[gs]
            n_cap[gs] = np.floor((lam_max - base[gs]) / alpha + 1e-9).astype(np.int64)
            guess = _probe_steps(
                model, cur[gs], ss, px[gs], py[gs], pc[gs], base[gs], alpha,
                mutable, lower, upper, cfg.simplex_scale * data.mads,
            )
            for g, n in zip(gs, guess):
                if n_cap[g] < 1:
                    continue
                if n <= 1 or n_cap[g] == 1:
                    step(g)
                    continue
                searching[g], first[g] = True, True
                lo[g], hi[g] = 0, -1
                trial[g] = min(n, n_cap[g])
                nxt.append(g)
        if nxt:
            launch(np.array(sorted(nxt), dtype=np.int64))

    best: dict[int, CounterfactualResult] = {}
    for g in range(owner.size):
        i = int(owner[g])
        restart = g - int(np.searchsorted(owner, i))
        xp = cur[g].copy()
        s = model.score(xp)
        dist = float((np.abs(xp - X[i]) * coefs[i]).sum())
        res = _result(X[i], xp, y_targets[i], s, dist, lam[g], specs, eps, kinds[i], traces[g], restart)
        prev = best.get(i)
        if prev is None:
            best[i] = res
        elif res.valid and (not prev.valid or res.distance < prev.distance):
            best[i] = res
        elif not res.valid and not prev.valid:
            if abs(res.y_achieved - res.y_target) < abs(prev.y_achieved - prev.y_target):
                best[i] = res
    for i, res in best.items():
        results[i] = res
    return results


def generate_negative(x, model: Predictor, data: Dataset, cfg: CfConfig = CfConfig()):
    """Smallest change that gets a rejected ``x`` accepted.

    The target sits ``margin`` (default ``epsilon``) above 0.5, so a valid
    result scores at least 0.5 and is classified as accepted.
    """
    if model.classify(np.asarray(x, dtype=float)) != 0:
        raise ValueError("instance is already accepted; use generate_positive")
    margin = cfg.epsilon if cfg.margin is None else cfg.margin
    return generate(x, 0.5 + margin, model, data, cfg, kind="negative")


def generate_positive(x, model: Predictor, data: Dataset, cfg: CfConfig = CfConfig()):
    """Move an accepted ``x`` onto the decision boundary; the deltas are its safety margin."""
    if model.classify(np.asarray(x, dtype=float)) != 1:
        raise ValueError("instance is rejected; use generate_negative")
    return generate(x, 0.5, model, data, cfg, kind="positive")


def explain_auto(x, model: Predictor, data: Dataset, cfg: CfConfig = CfConfig()):
    """Negative mode for rejected instances, positive mode for accepted ones."""
    if model.classify(np.asarray(x, dtype=float)) == 1:
        return generate_positive(x, model, data, cfg)
    return generate_negative(x, model, data, cfg)
