"""Experiment harness: model quality tables and counterfactual size comparisons."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset
from .distance import WeightVector
from .generator import CfConfig, CounterfactualResult, change_thresholds, generate_many
from .models import ModelConfig, Predictor, TrainReport, grid_search
from .weights import DEFAULT_K, global_theta, knn_theta

__all__ = [
    "STRATEGIES",
    "SizeReport",
    "counterfactual_size",
    "select_instances",
    "strategy_thetas",
    "run_size_benchmark",
    "default_grids",
    "run_power_benchmark",
    "relative_improvement",
    "format_power_table",
    "format_size_table",
]

# "uniform" is theta = all ones; it must reproduce "baseline" exactly
STRATEGIES = ("baseline", "importance", "knn", "uniform")


def counterfactual_size(result: CounterfactualResult, specs) -> int:
    """Number of features whose change exceeds ``max(1e-3 * MAD_j, 1e-9)``."""
    deltas = np.asarray(result.deltas, dtype=float)
    return int(np.count_nonzero(np.abs(deltas) > change_thresholds(specs)))


@dataclass(frozen=True)
class SizeReport:
    model: str
    strategy: str
    mean_size: float
    std_size: float
    n_instances: int
    validity_rate: float
    sizes: tuple[int, ...] = field(default=(), repr=False)  # one per valid result
    error: str | None = None

    def to_dict(self):
        return {
            "model": self.model,
            "strategy": self.strategy,
            "mean_size": _clean(self.mean_size),
            "std_size": _clean(self.std_size),
            "n_instances": self.n_instances,
            "validity_rate": _clean(self.validity_rate),
            "error": self.error,
        }


def _clean(v):
    return None if v is None or not math.isfinite(v) else float(v)


def select_instances(data: Dataset, model: Predictor, n_instances: int, mode: str = "rejected") -> np.ndarray:
    """First ``n_instances`` rows (in row order) the model rejects, or accepts."""
    if mode not in ("rejected", "accepted"):
        raise ValueError("mode must be 'rejected' or 'accepted'")
    labels = model.classify(data.records)
    rows = np.flatnonzero(labels == (0 if mode == "rejected" else 1))
    if n_instances > rows.size:
        raise ValueError(f"asked for {n_instances} {mode} instances, only {rows.size} available")
    return rows[:n_instances]


def strategy_thetas(strategy: str, data: Dataset, X, desired_class: int, k: int = DEFAULT_K):
    """One weight vector (or None for the plain distance) per row of ``X``."""
    if strategy == "baseline":
        return [None] * len(X)
    if strategy == "uniform":
        return [WeightVector.uniform(data.specs)] * len(X)
    if strategy == "importance":
        return [global_theta(data)] * len(X)
    if strategy == "knn":
        return [knn_theta(data, x, desired_class, k) for x in X]
    raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")


def _cell_setup(mode, cfg):
    if mode == "rejected":
        margin = cfg.epsilon if cfg.margin is None else cfg.margin
        return 0.5 + margin, "negative", 1
    return 0.5, "positive", 0


def _report(name, strategy, data, results) -> SizeReport:
    sizes = [counterfactual_size(r, data.specs) for r in results if r.valid]
    n = len(results)
    return SizeReport(
        model=name,
        strategy=strategy,
        mean_size=float(np.mean(sizes)) if sizes else float("nan"),
        std_size=float(np.std(sizes)) if sizes else float("nan"),
        n_instances=n,
        validity_rate=len(sizes) / n if n else float("nan"),
        sizes=tuple(sizes),
    )


def _size_cells(name, strategies, data, model, rows, cfg, mode, k) -> list[SizeReport]:
    # every strategy in one batched call; problems in a batch do not interact
    X = data.records[rows]
    target, kind, desired = _cell_setup(mode, cfg)
    thetas = [t for s in strategies for t in strategy_thetas(s, data, X, desired, k)]
    X_all = np.tile(X, (len(strategies), 1))
    results = generate_many(X_all, target, model, data, cfg, thetas=thetas, kinds=[kind] * len(X_all))
    m = len(rows)
    return [_report(name, s, data, results[i * m : (i + 1) * m]) for i, s in enumerate(strategies)]


def _size_cell(name, strategy, data, model, rows, cfg, mode, k) -> SizeReport:
    return _size_cells(name, [strategy], data, model, rows, cfg, mode, k)[0]


def run_size_benchmark(
    data: Dataset,
    models: Mapping[str, Predictor],
    strategies: Sequence[str] = ("baseline", "importance", "knn"),
    n_instances: int = 200,
    cfg: CfConfig = CfConfig(),
    mode: str = "rejected",
    k: int = DEFAULT_K,
) -> list[SizeReport]:
    """Mean and std counterfactual size for every (model, strategy) cell.

    Instances are the first ``n_instances`` rows each model rejects
    (``mode="accepted"`` switches to accepted rows and positive mode).
    Sizes are aggregated over valid results only. A failing cell becomes a
    report carrying the error message instead of aborting the run.
    """
    for s in strategies:
        if s not in STRATEGIES:
            raise ValueError(f"unknown strategy {s!r}; choose from {STRATEGIES}")
    reports = []
    for name in sorted(models):
        model = models[name]
        try:
            rows = select_instances(data, model, n_instances, mode)
        except ValueError as exc:
            reports.extend(_failed(name, s, exc) for s in strategies)
            continue
        try:
            reports.extend(_size_cells(name, list(strategies), data, model, rows, cfg, mode, k))
            continue
        except (ValueError, FloatingPointError, ArithmeticError):
            pass
        # isolate the failing cell
        for strategy in strategies:
            try:
                reports.append(_size_cell(name, strategy, data, model, rows, cfg, mode, k))
            except (ValueError, FloatingPointError, ArithmeticError) as exc:
                reports.append(_failed(name, strategy, exc))
    return reports


def _failed(name, strategy, exc) -> SizeReport:
    nan = float("nan")
    return SizeReport(name, strategy, nan, nan, 0, nan, (), f"{type(exc).__name__}: {exc}")


def default_grids(seed: int = 0) -> dict[str, list[ModelConfig]]:
    """Small hyperparameter grids for the four reference model families."""
    return {
        "logreg": [ModelConfig("logreg", {"l2": l2}, seed) for l2 in (1e-4, 1e-3, 1e-2)],
        "mlp": [ModelConfig("mlp", {"hidden_units": h}, seed) for h in (11, 22)],
        "gradboost": [
            ModelConfig("gradboost", {"trees": t, "depth": d}, seed) for t, d in ((100, 2), (100, 3))
        ],
        "linear_svc": [ModelConfig("linear_svc", {"c": c}, seed) for c in (1e-3, 1e-2)],
    }


def run_power_benchmark(
    data: Dataset,
    grids: Mapping[str, Sequence[ModelConfig]],
    k: int = 3,
    seed: int = 0,
) -> dict[str, tuple[ModelConfig, TrainReport]]:
    """Grid-search every model family with ``k``-fold CV; best config and its scores."""
    if not grids:
        raise ValueError("no model grids given")
    out = {}
    for name in grids:
        grid = list(grids[name])
        if not grid:
            raise ValueError(f"empty grid for {name!r}")
        out[name] = grid_search(data, grid, k, seed)
    return out


def relative_improvement(reports: Sequence[SizeReport], strategy: str = "importance") -> dict[str, float]:
    """``(baseline - strategy) / baseline`` in percent per model, plus ``"average"``."""
    base = {r.model: r.mean_size for r in reports if r.strategy == "baseline" and r.error is None}
    other = {r.model: r.mean_size for r in reports if r.strategy == strategy and r.error is None}
    if not other:
        raise ValueError(f"no {strategy!r} reports")
    out = {}
    for model in sorted(other):
        if model not in base:
            raise ValueError(f"missing baseline report for model {model!r}")
        if not base[model] > 0:
            raise ValueError(f"baseline mean size for {model!r} is not positive")
        out[model] = 100.0 * (base[model] - other[model]) / base[model]
    out["average"] = float(np.mean(list(out.values())))
    return out


def format_power_table(power: Mapping[str, tuple[ModelConfig, TrainReport]]) -> str:
    lines = [f"{'model':<12}{'F1':>8}{'Accuracy':>10}"]
    for name, (_, rep) in power.items():
        lines.append(f"{name:<12}{rep.f1:>8.2f}{rep.accuracy:>10.2f}")
    return "\n".join(lines)


def format_size_table(reports: Sequence[SizeReport]) -> str:
    strategies = [s for s in STRATEGIES if any(r.strategy == s for r in reports)]
    cell = {(r.model, r.strategy): r for r in reports}
    lines = [f"{'model':<12}" + "".join(f"{s:>18}" for s in strategies)]
    for model in sorted({r.model for r in reports}):
        row = f"{model:<12}"
        for s in strategies:
            r = cell.get((model, s))
            if r is None:
                text = "-"
            elif r.error is not None:
                text = "error"
            else:
                text = f"{r.mean_size:.2f}±{r.std_size:.2f}"
            row += f"{text:>18}"
        lines.append(row)
    return "\n".join(lines)
