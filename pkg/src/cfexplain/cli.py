"""Command line entry point: ``cfexplain {synth,train,weights,explain,benchmark}``.

Every JSON document is written with sorted keys and no timing information,
so repeating a command with the same seed reproduces it byte for byte.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from .bench import (
    STRATEGIES,
    default_grids,
    format_power_table,
    format_size_table,
    relative_improvement,
    run_power_benchmark,
    run_size_benchmark,
)
from .data import Dataset, gen_synthetic, load_csv, load_metadata, preprocess
from .explain import FeatureStyle, render, to_json
from .generator import CfConfig, generate_negative, generate_positive
from .models import TRAINERS, ModelConfig, cross_validate, grid_search, model_from_json, model_to_json
from .weights import DEFAULT_K, importance_profile, knn_changes, knn_theta

MODEL_KINDS = tuple(TRAINERS)


def _dump(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False)


def _write(text: str, path: str | None):
    if path is None or path == "-":
        print(text)
    else:
        Path(path).write_text(text + "\n", encoding="utf-8")


def _add_data_args(ap):
    g = ap.add_argument_group("data")
    g.add_argument("--data", help="CSV file with a header row")
    g.add_argument("--target", default="target", help="name of the label column")
    g.add_argument("--metadata", help="JSON file with per-feature lower/upper/mutable")
    g.add_argument("--positive-label", help="label value that counts as the positive class")
    g.add_argument("--preprocess", action="store_true", help="dedupe rows and drop correlated columns")
    g.add_argument("--corr-threshold", type=float, default=0.95)
    g.add_argument("--drop-sentinel", type=float, help="with --preprocess, drop rows whose every feature equals this")
    g.add_argument("--synthetic", action="store_true", help="use generated data instead of --data")
    g.add_argument("--n", type=int, default=2000, help="synthetic rows")
    g.add_argument("--p", type=int, default=20, help="synthetic features")
    g.add_argument("--seed", type=int, default=0)


def _load_data(args) -> Dataset:
    if args.synthetic == bool(args.data):
        raise SystemExit("give exactly one of --data or --synthetic")
    if args.synthetic:
        return gen_synthetic(args.n, args.p, seed=args.seed)
    meta = load_metadata(args.metadata) if args.metadata else None
    data = load_csv(args.data, args.target, metadata=meta, positive_label=args.positive_label)
    if args.preprocess:
        data = preprocess(data, corr_threshold=args.corr_threshold, drop_sentinel=args.drop_sentinel)
    return data


def _parse_params(text):
    if not text:
        return {}
    params = json.loads(text)
    if not isinstance(params, dict):
        raise SystemExit("--params must be a JSON object")
    return params


def _load_grids(path, kinds, seed):
    if path is None:
        grids = default_grids(seed)
        return {k: grids[k] for k in kinds}
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return {k: [ModelConfig(k, params, seed) for params in doc[k]] for k in kinds}


def cmd_synth(args):
    data = gen_synthetic(args.n, args.p, seed=args.seed)
    df = pd.DataFrame(data.records, columns=data.names)
    df["target"] = data.targets
    df.to_csv(args.out, index=False)
    print(f"wrote {data.n} rows x {data.p} features to {args.out}")
    return 0


def cmd_train(args):
    data = _load_data(args)
    if args.grid:
        config, report = grid_search(data, _load_grids(args.grid, [args.model], args.seed)[args.model],
                                     args.folds, args.seed)
    else:
        config = ModelConfig(args.model, _parse_params(args.params), args.seed)
        report = cross_validate(data, config, args.folds, args.seed)
    model = config(data)
    if args.out:
        Path(args.out).write_text(model_to_json(model) + "\n", encoding="utf-8")
    _write(_dump({"model": config.describe(), "cv": report.to_dict()}), args.report)
    return 0


def cmd_weights(args):
    data = _load_data(args)
    doc = importance_profile(data).to_dict(data.names)
    if args.row is not None:
        x = data.records[args.row]
        desired = 1 - int(data.targets[args.row]) if args.desired is None else args.desired
        doc["knn"] = {
            "row": args.row,
            "desired_class": desired,
            "k": args.k,
            "changes": dict(zip(data.names, knn_changes(data, x, desired, args.k).tolist())),
            "theta": dict(zip(data.names, knn_theta(data, x, desired, args.k).to_list())),
        }
    _write(_dump(doc), args.out)
    return 0


def _get_model(args, data):
    if args.model_file:
        return model_from_json(Path(args.model_file).read_text(encoding="utf-8"))
    return ModelConfig(args.model, _parse_params(args.params), args.seed)(data)


def cmd_explain(args):
    data = _load_data(args)
    model = _get_model(args, data)
    if (args.row is None) == (args.values is None):
        raise SystemExit("give exactly one of --row or --values")
    if args.row is not None:
        x = data.records[args.row]
    else:
        x = np.array([float(v) for v in args.values.split(",")])
        if x.size != data.p:
            raise SystemExit(f"--values needs {data.p} numbers, got {x.size}")
    accepted = model.classify(x) == 1
    mode = args.mode if args.mode != "auto" else ("positive" if accepted else "negative")
    desired = 0 if mode == "positive" else 1
    theta = None
    if args.strategy == "importance":
        theta = importance_profile(data).theta_global
    elif args.strategy == "knn":
        theta = knn_theta(data, x, desired, args.k)
    cfg = CfConfig(epsilon=args.epsilon, restarts=args.restarts, seed=args.seed, theta=theta)
    gen = generate_positive if mode == "positive" else generate_negative
    try:
        result = gen(x, model, data, cfg)
    except ValueError as exc:
        raise SystemExit(str(exc)) from exc
    styles = {}
    if args.formats:
        styles = {k: FeatureStyle(fmt=v) for k, v in json.loads(args.formats).items()}
    explanation, text = render(result, data.specs, styles)
    print(text)
    doc = {
        "strategy": args.strategy,
        "result": result.to_dict(data.names),
        "explanation": json.loads(to_json(explanation)),
    }
    if args.json:
        _write(_dump(doc), args.json)
    return 0 if result.valid else 2


def _checks(reports, data_is_synthetic):
    """Acceptance-style checks on a size benchmark; returns (name, passed) pairs."""
    cell = {(r.model, r.strategy): r for r in reports if r.error is None}
    out = []
    for model in sorted({r.model for r in reports}):
        base = cell.get((model, "baseline"))
        if base is None:
            continue
        imp, knn, uni = (cell.get((model, s)) for s in ("importance", "knn", "uniform"))
        if imp is not None:
            out.append((f"{model}: importance mean size <= baseline", imp.mean_size <= base.mean_size))
        if knn is not None:
            out.append((f"{model}: knn mean size <= 1.05 x baseline", knn.mean_size <= 1.05 * base.mean_size))
        if uni is not None:
            out.append((f"{model}: uniform weights reproduce baseline", uni.sizes == base.sizes))
        if data_is_synthetic and model == "logreg":
            out.append((f"{model}: baseline validity >= 0.95", base.validity_rate >= 0.95))
    return out


def cmd_benchmark(args):
    data = _load_data(args)
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    for m in models:
        if m not in MODEL_KINDS:
            raise SystemExit(f"unknown model {m!r}; choose from {MODEL_KINDS}")
    doc = {"seed": args.seed, "n": data.n, "p": data.p, "positives": int(data.targets.sum())}
    if args.power or args.grid:
        power = run_power_benchmark(data, _load_grids(args.grid, models, args.seed), args.folds, args.seed)
        print(format_power_table(power))
        doc["power"] = {k: {"config": c.describe(), "cv": r.to_dict()} for k, (c, r) in power.items()}
        configs = {k: c for k, (c, _) in power.items()}
    else:
        configs = {k: ModelConfig(k, {}, args.seed) for k in models}
    trained = {k: configs[k](data) for k in models}
    cfg = CfConfig(epsilon=args.epsilon, restarts=args.restarts, seed=args.seed)
    reports = run_size_benchmark(data, trained, strategies, args.instances, cfg, args.mode, args.k)
    print(format_size_table(reports))
    doc["sizes"] = [r.to_dict() for r in reports]
    if "baseline" in strategies:
        for s in ("importance", "knn"):
            if s in strategies:
                try:
                    doc[f"improvement_{s}"] = relative_improvement(reports, s)
                except ValueError as exc:
                    doc[f"improvement_{s}"] = {"error": str(exc)}
    status = 0
    if args.check:
        checks = _checks(reports, args.synthetic)
        doc["checks"] = {name: ok for name, ok in checks}
        for name, ok in checks:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}")
        status = 0 if all(ok for _, ok in checks) else 1
    if args.out:
        _write(_dump(doc), args.out)
    return status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cfexplain", description="Counterfactual explanations for tabular classifiers.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="write the synthetic dataset to CSV")
    sp.add_argument("--n", type=int, default=2000)
    sp.add_argument("--p", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="cross-validate and fit a model")
    _add_data_args(sp)
    sp.add_argument("--model", choices=MODEL_KINDS, default="logreg")
    sp.add_argument("--params", help="hyperparameters as a JSON object")
    sp.add_argument("--grid", help="JSON file {kind: [params, ...]}; best config by CV F1")
    sp.add_argument("--folds", type=int, default=3)
    sp.add_argument("--out", help="where to save the fitted model JSON")
    sp.add_argument("--report", help="where to write the CV report (default stdout)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("weights", help="dump ANOVA F values and weight vectors")
    _add_data_args(sp)
    sp.add_argument("--row", type=int, help="also compute KNN weights for this row")
    sp.add_argument("--desired", type=int, choices=(0, 1), help="desired class (default: flip the label)")
    sp.add_argument("--k", type=int, default=DEFAULT_K)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_weights)

    sp = sub.add_parser("explain", help="counterfactual explanation for one instance")
    _add_data_args(sp)
    sp.add_argument("--model-file", help="model JSON from `train --out`")
    sp.add_argument("--model", choices=MODEL_KINDS, default="logreg", help="trained on the fly without --model-file")
    sp.add_argument("--params", help="hyperparameters for on-the-fly training")
    sp.add_argument("--row", type=int)
    sp.add_argument("--values", help="comma-separated feature values")
    sp.add_argument("--mode", choices=("auto", "positive", "negative"), default="auto")
    sp.add_argument("--strategy", choices=("baseline", "importance", "knn"), default="baseline")
    sp.add_argument("--epsilon", type=float, default=0.05)
    sp.add_argument("--restarts", type=int, default=5)
    sp.add_argument("--k", type=int, default=DEFAULT_K)
    sp.add_argument("--formats", help='JSON {feature: format}, e.g. {"income": "${:,.0f}"}')
    sp.add_argument("--json", help="write the JSON report here ('-' for stdout)")
    sp.set_defaults(func=cmd_explain)

    sp = sub.add_parser("benchmark", help="model quality and counterfactual size tables")
    _add_data_args(sp)
    sp.add_argument("--models", default="logreg", help=f"comma list from {','.join(MODEL_KINDS)}")
    sp.add_argument("--strategies", default="baseline,importance,knn", help=f"comma list from {','.join(STRATEGIES)}")
    sp.add_argument("--instances", type=int, default=200)
    sp.add_argument("--mode", choices=("rejected", "accepted"), default="rejected")
    sp.add_argument("--restarts", type=int, default=5)
    sp.add_argument("--epsilon", type=float, default=0.05)
    sp.add_argument("--k", type=int, default=DEFAULT_K)
    sp.add_argument("--power", action="store_true", help="grid-search the models first (default grids)")
    sp.add_argument("--grid", help="JSON file {kind: [params, ...]} for the power table")
    sp.add_argument("--folds", type=int, default=3)
    sp.add_argument("--check", action="store_true", help="exit 1 if a directional check fails")
    sp.add_argument("--out", help="write the JSON report here ('-' for stdout)")
    sp.set_defaults(func=cmd_benchmark)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
