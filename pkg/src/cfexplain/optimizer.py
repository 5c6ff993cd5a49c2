"""Box-constrained Nelder-Mead simplex search.

Trial points are clipped onto the box before evaluation, so the objective
is only ever called at feasible points. Frozen coordinates are removed from
the search space altogether and keep their starting value.

:class:`NelderMeadPool` advances many independent problems together and
hands every round of trial points to the objective as one matrix, which is
what makes counterfactual search over thousands of instances affordable.
Problems may join the pool while others are running. Each follows exactly
the same sequence of steps it would follow on its own;
:func:`nelder_mead_batch` runs a fixed set and :func:`nelder_mead` is the
one-problem case.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "SimplexState",
    "OptimResult",
    "BatchResult",
    "initial_simplex",
    "nelder_mead",
    "nelder_mead_batch",
    "NelderMeadPool",
]

REFLECT, EXPAND, CONTRACT, SHRINK = 1.0, 2.0, 0.5, 0.5


@dataclass
class SimplexState:
    vertices: np.ndarray  # (d + 1, d), sorted by value
    values: np.ndarray
    iterations: int = 0

    def sort(self):
        order = np.argsort(self.values, kind="stable")
        self.vertices = self.vertices[order]
        self.values = self.values[order]


@dataclass(frozen=True)
class OptimResult:
    x_opt: np.ndarray
    f_opt: float
    iterations: int
    converged: bool
    evaluations: int = 0
    restarts: int = 0


@dataclass(frozen=True)
class BatchResult:
    x_opt: np.ndarray  # (m, p)
    f_opt: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    evaluations: np.ndarray
    restarts: np.ndarray
    keys: np.ndarray | None = None  # problem labels, for results coming from a pool

    def __getitem__(self, i) -> OptimResult:
        return OptimResult(
            x_opt=self.x_opt[i].copy(),
            f_opt=float(self.f_opt[i]),
            iterations=int(self.iterations[i]),
            converged=bool(self.converged[i]),
            evaluations=int(self.evaluations[i]),
            restarts=int(self.restarts[i]),
        )


def _as_box(bounds, d):
    bounds = np.asarray(bounds, dtype=float)
    if bounds.shape != (d, 2):
        raise ValueError(f"expected {d} (lower, upper) bounds, got shape {bounds.shape}")
    lo, hi = bounds[:, 0].copy(), bounds[:, 1].copy()
    if np.any(lo > hi):
        raise ValueError("lower bound exceeds upper bound")
    return lo, hi


def _simplex_offsets(x0, lo, hi, h):
    """Per-dimension vertex coordinate for a batch of simplices (rows of ``x0``)."""
    room_up, room_down = hi - x0, x0 - lo
    go_up = (room_up >= h) | (room_up >= room_down)
    return np.where(go_up, np.minimum(x0 + h, hi), np.maximum(x0 - h, lo))


def initial_simplex(x0, bounds, scale: float = 0.5, step=None) -> SimplexState:
    """Vertices ``x0`` and ``x0 + scale * step_j * e_j`` for every dimension.

    ``step`` defaults to ones (callers pass per-feature MADs). Each vertex
    steps upward unless the box leaves less room above ``x0`` than both the
    step and the room below, in which case it steps downward; it is then
    clipped to the box. Values are left as NaN.
    """
    x0 = np.asarray(x0, dtype=float)
    d = x0.size
    if d == 0:
        raise ValueError("nothing to optimise: no free dimensions")
    lo, hi = _as_box(bounds, d)
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise ValueError("x0 lies outside the bounds")
    if np.any(hi - lo <= 0):
        j = int(np.flatnonzero(hi - lo <= 0)[0])
        raise ValueError(f"dimension {j} has zero feasible width; freeze it instead")
    step = np.ones(d) if step is None else np.asarray(step, dtype=float)
    h = np.where(step > 0, scale * step, scale * (hi - lo))
    vertices = np.tile(x0, (d + 1, 1))
    idx = np.arange(d)
    vertices[idx + 1, idx] = _simplex_offsets(x0, lo, hi, h)
    return SimplexState(vertices, np.full(d + 1, np.nan))


def nelder_mead(
    objective: Callable[[np.ndarray], float],
    x0,
    bounds: Sequence[tuple[float, float]],
    frozen: Sequence[int] = (),
    *,
    scale: float = 0.5,
    step=None,
    f_tol: float = 1e-7,
    x_tol: float = 1e-7,
    max_iter: int | None = None,
    max_restarts: int = 2,
) -> OptimResult:
    """Minimise ``objective`` over the box, leaving ``frozen`` indices at ``x0``.

    ``objective`` receives a full-length vector. Stops once the spread of
    simplex values drops below ``f_tol`` or the largest vertex offset from
    the best drops below ``x_tol`` (converged), or after ``max_iter``
    (default ``200 * d``) iterations. If the best value fails to improve by
    more than ``f_tol`` for ``2 * d`` iterations in a row, the simplex is
    rebuilt around the best vertex at half the previous scale, at most
    ``max_restarts`` times.
    """

    def batch_objective(X, _idx):
        return np.array([objective(row) for row in X], dtype=float)

    res = nelder_mead_batch(
        batch_objective,
        np.asarray(x0, dtype=float)[None, :],
        bounds,
        frozen,
        scale=scale,
        step=step,
        f_tol=f_tol,
        x_tol=x_tol,
        max_iter=max_iter,
        max_restarts=max_restarts,
    )
    return res[0]


class NelderMeadPool:
    """Independent Nelder-Mead searches advanced together, joining at any time.

    Every call to :meth:`step` runs one iteration of all active searches and
    hands each round of trial points to ``objective(X, keys)`` as one matrix;
    ``keys`` are the integer labels given to :meth:`add`. A label may be
    reused once its previous search has finished. Searches never interact,
    so each follows exactly the steps it would follow on its own.
    """

    def __init__(
        self,
        objective: Callable[[np.ndarray, np.ndarray], np.ndarray],
        p: int,
        n_keys: int,
        frozen: Sequence[int] = (),
        *,
        f_tol: float = 1e-7,
        x_tol: float = 1e-7,
        max_iter: int | None = None,
        max_restarts: int = 2,
    ):
        mask = np.zeros(p, dtype=bool)
        mask[list(frozen)] = True
        self.free = np.flatnonzero(~mask)
        d = self.d = self.free.size
        if d == 0:
            raise ValueError("nothing to optimise: every dimension is frozen")
        self.objective = objective
        self.p = p
        self.f_tol, self.x_tol = f_tol, x_tol
        self.max_iter = 200 * d if max_iter is None else max_iter
        self.max_restarts = max_restarts
        self.evaluations = np.zeros(n_keys, dtype=np.int64)
        self._arange_d = np.arange(d)
        self.ids = np.zeros(0, dtype=np.int64)
        self.base = np.zeros((0, p))  # full rows; frozen coordinates are read from here
        self.V = np.zeros((0, d + 1, d))
        self.F = np.zeros((0, d + 1))
        self.lo = np.zeros((0, d))
        self.hi = np.zeros((0, d))
        self.step_w = np.zeros((0, d))
        self.scale = np.zeros(0)
        self.iters = np.zeros(0, dtype=np.int64)
        self.stall = np.zeros(0, dtype=np.int64)
        self.restarts = np.zeros(0, dtype=np.int64)
        self.best_val = np.zeros(0)

    @property
    def active(self) -> int:
        return self.ids.size

    def _f(self, Z, base, keys):
        full = base.copy()
        full[:, self.free] = Z
        vals = np.asarray(self.objective(full, keys), dtype=float).reshape(-1)
        if vals.shape != (keys.size,):
            raise ValueError("objective must return one value per row")
        self.evaluations += np.bincount(keys, minlength=self.evaluations.size)
        return vals

    def _build(self, keys, base, centers, center_vals, sc, lo, hi, step):
        """Fresh simplices around ``centers``; vertex 0 is the center."""
        k, d = keys.size, self.d
        h = sc[:, None] * step
        h = np.where(h > 0, h, sc[:, None] * (hi - lo))
        verts = np.repeat(centers[:, None, :], d + 1, axis=1)
        verts[:, self._arange_d + 1, self._arange_d] = _simplex_offsets(centers, lo, hi, h)
        vals = np.empty((k, d + 1))
        vals[:, 0] = center_vals
        pts = verts[:, 1:, :].reshape(k * d, d)
        vals[:, 1:] = self._f(pts, np.repeat(base, d, axis=0), np.repeat(keys, d)).reshape(k, d)
        return verts, vals

    def add(self, keys, X0, lower, upper, step=None, scale=0.5):
        """Start one search per row of ``X0`` (full-length rows, labelled ``keys``).

        ``lower``, ``upper`` and ``step`` are full-length, shared or one row
        per search; ``scale`` is a scalar or one value per search.
        """
        keys = np.asarray(keys, dtype=np.int64)
        X0 = np.array(X0, dtype=float).reshape(keys.size, self.p)
        k, free = keys.size, self.free
        lo = np.broadcast_to(np.asarray(lower, dtype=float), (k, self.p))
        hi = np.broadcast_to(np.asarray(upper, dtype=float), (k, self.p))
        if np.any(X0 < lo) or np.any(X0 > hi):
            raise ValueError("x0 lies outside the bounds")
        lo, hi = lo[:, free], hi[:, free]
        if np.any(hi - lo <= 0):
            raise ValueError("a free dimension has zero feasible width; freeze it instead")
        st = np.ones(self.d) if step is None else np.asarray(step, dtype=float)[..., free]
        st = np.broadcast_to(st, (k, self.d)).copy()
        sc = np.broadcast_to(np.asarray(scale, dtype=float), (k,)).copy()
        self.evaluations[keys] = 0
        f0 = self._f(X0[:, free], X0, keys)
        if not np.all(np.isfinite(f0)):
            raise ValueError("objective is not finite at x0")
        V, F = self._build(keys, X0, X0[:, free].copy(), f0, sc, lo, hi, st)
        self.ids = np.concatenate([self.ids, keys])
        self.base = np.concatenate([self.base, X0])
        self.V = np.concatenate([self.V, V])
        self.F = np.concatenate([self.F, F])
        self.lo = np.concatenate([self.lo, lo])
        self.hi = np.concatenate([self.hi, hi])
        self.step_w = np.concatenate([self.step_w, st])
        self.scale = np.concatenate([self.scale, sc])
        self.iters = np.concatenate([self.iters, np.zeros(k, dtype=np.int64)])
        self.stall = np.concatenate([self.stall, np.zeros(k, dtype=np.int64)])
        self.restarts = np.concatenate([self.restarts, np.zeros(k, dtype=np.int64)])
        self.best_val = np.concatenate([self.best_val, F.min(axis=1)])

    def _keep(self, keep):
        for name in ("ids", "base", "V", "F", "lo", "hi", "step_w", "scale", "iters", "stall", "restarts", "best_val"):
            setattr(self, name, getattr(self, name)[keep])

    def step(self) -> BatchResult:
        """Retire the searches that have stopped, then iterate the rest once.

        Returns the retired searches; ``x_opt`` rows are full length and
        ``keys`` are available as ``BatchResult.keys``.
        """
        V, F = self.V, self.F
        k = self.ids.size
        r = np.arange(k)
        order = np.argsort(F, axis=1, kind="stable")
        ib = order[:, 0]
        f_best, f_worst = F[r, ib], F[r, order[:, -1]]
        best = V[r, ib]
        D = (V - best[:, None, :]).reshape(k, -1)
        spread = np.maximum(D.max(axis=1), -D.min(axis=1))  # max |V - best|, without a temporary for abs
        conv = (f_worst - f_best < self.f_tol) | (spread < self.x_tol)
        done = conv | (self.iters >= self.max_iter)
        fin = np.flatnonzero(done)
        x_full = self.base[fin].copy()
        x_full[:, self.free] = best[fin]
        keys = self.ids[fin]
        out = BatchResult(
            x_opt=x_full,
            f_opt=f_best[fin],
            iterations=self.iters[fin].copy(),
            converged=conv[fin],
            evaluations=self.evaluations[keys].copy(),
            restarts=self.restarts[fin].copy(),
            keys=keys,
        )
        if fin.size:
            keep = ~done
            self._keep(keep)
            order = order[keep]
            V, F = self.V, self.F
            k = self.ids.size
            if not k:
                return out
            r = np.arange(k)
        self._iterate(order, r)
        return out

    def _iterate(self, order, r):
        d = self.d
        V, F, ids, lo_w, hi_w = self.V, self.F, self.ids, self.lo, self.hi
        k = ids.size
        ib, isw, iw = order[:, 0], order[:, -2], order[:, -1]
        f_best, f_second, f_worst = F[r, ib], F[r, isw], F[r, iw]
        self.iters += 1

        worst = V[r, iw]
        centroid = (np.einsum("kvd->kd", V) - worst) / d
        xr = np.clip(centroid + REFLECT * (centroid - worst), lo_w, hi_w)
        fr = self._f(xr, self.base, ids)

        expand = fr < f_best
        accept_r = ~expand & (fr < f_second)
        outside = ~expand & ~accept_r & (fr < f_worst)
        inside = ~expand & ~accept_r & ~outside

        new_x = xr
        new_f = fr
        shrink = np.zeros(k, dtype=bool)
        second = ~accept_r
        if second.any():
            rows = np.flatnonzero(second)
            c = centroid[rows]
            target = np.where(inside[rows, None], worst[rows], xr[rows])
            coeff = np.where(expand[rows], EXPAND, CONTRACT)[:, None]
            trial = np.clip(c + coeff * (target - c), lo_w[rows], hi_w[rows])
            f2 = self._f(trial, self.base[rows], ids[rows])
            fr_r = fr[rows]
            take = (
                (expand[rows] & (f2 < fr_r))
                | (outside[rows] & (f2 <= fr_r))
                | (inside[rows] & (f2 < f_worst[rows]))
            )
            new_x = xr.copy()
            new_f = fr.copy()
            new_x[rows[take]] = trial[take]
            new_f[rows[take]] = f2[take]
            shrink[rows] = (outside[rows] | inside[rows]) & ~take

        rep = np.flatnonzero(~shrink)
        V[rep, iw[rep]] = new_x[rep]
        F[rep, iw[rep]] = new_f[rep]
        if shrink.any():
            rows = np.flatnonzero(shrink)
            others = order[rows, 1:]
            b = V[rows, ib[rows]][:, None, :]
            moved = b + SHRINK * (V[rows[:, None], others] - b)
            V[rows[:, None], others] = moved
            vals = self._f(moved.reshape(rows.size * d, d), np.repeat(self.base[rows], d, axis=0), np.repeat(ids[rows], d))
            F[rows[:, None], others] = vals.reshape(rows.size, d)

        cur_best = F.min(axis=1)
        improved = cur_best < self.best_val - self.f_tol
        self.stall = np.where(improved, 0, self.stall + 1)
        self.best_val = np.minimum(self.best_val, cur_best)

        rebuild = (self.stall >= 2 * d) & (self.restarts < self.max_restarts)
        if rebuild.any():
            rows = np.flatnonzero(rebuild)
            self.restarts[rows] += 1
            self.scale[rows] *= 0.5
            self.stall[rows] = 0
            jb = np.argmin(F[rows], axis=1)
            verts, vals = self._build(
                ids[rows], self.base[rows], V[rows, jb], F[rows, jb],
                self.scale[rows], lo_w[rows], hi_w[rows], self.step_w[rows],
            )
            V[rows], F[rows] = verts, vals


def nelder_mead_batch(
    objective: Callable[[np.ndarray, np.ndarray], np.ndarray],
    X0,
    bounds,
    frozen: Sequence[int] = (),
    *,
    scale=0.5,
    step=None,
    f_tol: float = 1e-7,
    x_tol: float = 1e-7,
    max_iter: int | None = None,
    max_restarts: int = 2,
) -> BatchResult:
    """Run one Nelder-Mead search per row of ``X0``.

    ``objective(X, idx)`` evaluates full-length rows ``X`` for problems
    ``idx`` (indices into ``X0``) and returns one value per row. ``bounds``
    is ``(p, 2)`` shared by all problems or ``(m, p, 2)``; ``scale`` may be a
    scalar or one value per problem. Stopping rules are those of
    :func:`nelder_mead`, applied per problem.
    """
    X0 = np.array(X0, dtype=float)
    if X0.ndim != 2:
        raise ValueError("X0 must be a matrix with one starting point per row")
    m, p = X0.shape
    bounds = np.asarray(bounds, dtype=float)
    if bounds.ndim == 2:
        lo, hi = _as_box(bounds, p)
    elif bounds.shape == (m, p, 2):
        lo, hi = bounds[..., 0], bounds[..., 1]
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
    else:
        raise ValueError(f"bounds must have shape ({p}, 2) or ({m}, {p}, 2)")
    pool = NelderMeadPool(
        objective, p, m, frozen, f_tol=f_tol, x_tol=x_tol, max_iter=max_iter, max_restarts=max_restarts
    )
    pool.add(np.arange(m), X0, lo, hi, step, scale)
    x_opt, f_opt = X0.copy(), np.empty(m)
    iters, restarts = np.zeros(m, dtype=np.int64), np.zeros(m, dtype=np.int64)
    converged = np.zeros(m, dtype=bool)
    while pool.active:
        fin = pool.step()
        x_opt[fin.keys] = fin.x_opt
        f_opt[fin.keys] = fin.f_opt
        iters[fin.keys] = fin.iterations
        restarts[fin.keys] = fin.restarts
        converged[fin.keys] = fin.converged
    return BatchResult(
        x_opt=x_opt,
        f_opt=f_opt,
        iterations=iters,
        converged=converged,
        evaluations=pool.evaluations.copy(),
        restarts=restarts,
    )
