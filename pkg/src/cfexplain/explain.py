"""Turn counterfactual results into statements and plain-language text.

Rejections get a list of changes that would have led to approval;
acceptances get a per-feature tolerance, i.e. how far each feature may
drift before the decision is at risk.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import FeatureSpec
from .generator import CounterfactualResult, change_thresholds

__all__ = [
    "Statement",
    "Explanation",
    "FeatureStyle",
    "NO_COUNTERFACTUAL",
    "AT_BOUNDARY",
    "NO_MARGIN",
    "changed_features",
    "render_negative",
    "render_positive",
    "render",
    "to_json",
    "from_json",
]

NO_COUNTERFACTUAL = "no counterfactual found within budget"
AT_BOUNDARY = "Your application is already at the boundary: no change is needed for approval."
NO_MARGIN = "no margin: application is at the decision boundary"

DIRECTIONS = ("increase", "decrease", "tolerance")


@dataclass(frozen=True)
class Statement:
    feature: str
    current: float
    counterfactual: float
    direction: str

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")


@dataclass(frozen=True)
class Explanation:
    kind: str
    statements: tuple[Statement, ...] = field(default=())
    score: float = float("nan")
    valid: bool = False

    def __post_init__(self):
        if self.kind not in ("negative", "positive"):
            raise ValueError("kind must be 'negative' or 'positive'")
        object.__setattr__(self, "statements", tuple(self.statements))

    @property
    def features(self) -> list[str]:
        return [s.feature for s in self.statements]


@dataclass(frozen=True)
class FeatureStyle:
    """How a feature reads in text.

    ``label`` replaces the feature name in the "because" clause and
    ``cf_label`` in the "if ... had been" clause (defaults to ``label``).
    ``fmt`` is a ``str.format`` pattern such as ``"${:,.0f}"``.
    """

    label: str | None = None
    cf_label: str | None = None
    fmt: str | None = None


def changed_features(result: CounterfactualResult, specs: Sequence[FeatureSpec]) -> list[int]:
    """Indices with ``|delta| > tau``, largest MAD-normalised change first."""
    deltas = np.asarray(result.deltas, dtype=float)
    if deltas.size != len(specs):
        raise ValueError("result and specs disagree on the number of features")
    idx = np.flatnonzero(np.abs(deltas) > change_thresholds(specs))
    mads = np.array([specs[j].mad for j in idx], dtype=float)
    norm = np.abs(deltas[idx]) / np.where(mads > 0, mads, 1.0)
    # stable on ties: lower feature index first
    order = np.lexsort((idx, -norm))
    return [int(j) for j in idx[order]]


def _fmt(value: float, spec: FeatureSpec, style: FeatureStyle | None) -> str:
    if style is not None and style.fmt is not None:
        return style.fmt.format(value)
    text = f"{value:.{spec.decimals}f}"
    if text.startswith("-") and float(text) == 0:
        text = text[1:]
    return text


def _labels(spec: FeatureSpec, style: FeatureStyle | None) -> tuple[str, str]:
    label = spec.name if style is None or style.label is None else style.label
    cf = label if style is None or style.cf_label is None else style.cf_label
    return label, cf


def _check_kind(result, kind):
    if result.kind != kind:
        raise ValueError(f"expected a {kind} result, got kind={result.kind!r}")


def _statements(result, specs, positive):
    out = []
    for j in changed_features(result, specs):
        delta = result.deltas[j]
        direction = "tolerance" if positive else ("increase" if delta > 0 else "decrease")
        out.append(
            Statement(
                feature=specs[j].name,
                current=float(result.x_original[j]),
                counterfactual=float(result.x_cf[j]),
                direction=direction,
            )
        )
    return out


def _change_list(result, specs, styles):
    parts = []
    for j in changed_features(result, specs):
        style = styles.get(specs[j].name)
        parts.append(
            f"{specs[j].name} from {_fmt(result.x_original[j], specs[j], style)}"
            f" to {_fmt(result.x_cf[j], specs[j], style)}"
        )
    return ", ".join(parts) if parts else "nothing"


def render_negative(
    result: CounterfactualResult,
    specs: Sequence[FeatureSpec],
    styles: Mapping[str, FeatureStyle] | None = None,
) -> tuple[Explanation, str]:
    """Explanation and "denied because ... would have been approved" text."""
    _check_kind(result, "negative")
    styles = dict(styles or {})
    expl = Explanation("negative", _statements(result, specs, False), result.y_achieved, result.valid)
    if not result.valid:
        text = (
            f"{NO_COUNTERFACTUAL}: closest attempt (score {result.y_achieved:.3f}) changed "
            f"{_change_list(result, specs, styles)}"
        )
        return expl, text
    order = changed_features(result, specs)
    if not order:
        return expl, AT_BOUNDARY
    because, would = [], []
    for n, j in enumerate(order):
        spec, style = specs[j], styles.get(specs[j].name)
        label, cf_label = _labels(spec, style)
        because.append(f"your {label} is {_fmt(result.x_original[j], spec, style)}")
        verb = "had instead been" if n == 0 else "had been"
        would.append(f"your {cf_label} {verb} {_fmt(result.x_cf[j], spec, style)}")
    text = (
        f"Your application was denied because {' and '.join(because)}. "
        f"If {' and '.join(would)} and all other values remained constant, "
        "your application would have been approved"
    )
    return expl, text


def render_positive(
    result: CounterfactualResult,
    specs: Sequence[FeatureSpec],
    styles: Mapping[str, FeatureStyle] | None = None,
) -> tuple[Explanation, str]:
    """Explanation and one tolerance line per feature that can move."""
    _check_kind(result, "positive")
    styles = dict(styles or {})
    expl = Explanation("positive", _statements(result, specs, True), result.y_achieved, result.valid)
    if not result.valid:
        text = (
            f"{NO_COUNTERFACTUAL}: closest attempt (score {result.y_achieved:.3f}) changed "
            f"{_change_list(result, specs, styles)}"
        )
        return expl, text
    order = changed_features(result, specs)
    if not order:
        return expl, NO_MARGIN
    lines = []
    for j in order:
        spec, style = specs[j], styles.get(specs[j].name)
        label, _ = _labels(spec, style)
        lines.append(
            f"{label} may move from {_fmt(result.x_original[j], spec, style)} to "
            f"{_fmt(result.x_cf[j], spec, style)} before approval is at risk, all else constant"
        )
    return expl, "\n".join(lines)


def render(result, specs, styles=None) -> tuple[Explanation, str]:
    """Dispatch on ``result.kind``."""
    if result.kind == "positive":
        return render_positive(result, specs, styles)
    return render_negative(result, specs, styles)


def to_json(explanation: Explanation) -> str:
    doc = {
        "kind": explanation.kind,
        "statements": [asdict(s) for s in explanation.statements],
        "score": explanation.score,
        "valid": explanation.valid,
    }
    return json.dumps(doc, sort_keys=True)


def from_json(text: str) -> Explanation:
    doc = json.loads(text)
    return Explanation(
        kind=doc["kind"],
        statements=tuple(Statement(**s) for s in doc["statements"]),
        score=float(doc["score"]),
        valid=bool(doc["valid"]),
    )
