import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfexplain.data import Dataset, FeatureSpec
from cfexplain.distance import WeightVector, mad_distance
from cfexplain.generator import (
    CfConfig,
    change_thresholds,
    explain_auto,
    generate,
    generate_many,
    generate_negative,
    generate_positive,
    loss,
)
from cfexplain.models import FunctionPredictor

from conftest import sigmoid_1d

FAST = CfConfig(restarts=2)


class TestLoss:
    def test_hand_case(self):
        # lam 2, score 0.8, target 0.5, d 1.3 -> 2 * 0.09 + 1.3
        specs = (FeatureSpec("a", -10, 10, True, mad=1.0),)
        model = FunctionPredictor(lambda X: np.full(len(X), 0.8))
        assert loss([0.0], [1.3], 0.5, 2.0, model, specs) == pytest.approx(1.48)

    def test_zero_lambda_is_distance(self):
        specs = (FeatureSpec("a", -10, 10, True, mad=2.0), FeatureSpec("b", -10, 10, True, mad=1.0))
        model = FunctionPredictor(lambda X: np.full(len(X), 0.3))
        assert loss([0, 0], [1, 3], 0.9, 0.0, model, specs) == mad_distance([0, 0], [1, 3], specs)

    def test_non_finite_score(self):
        specs = (FeatureSpec("a", -10, 10, True, mad=1.0),)

        class Bad(FunctionPredictor):
            def score(self, x):
                return float("nan")

        with pytest.raises(ValueError):
            loss([0.0], [1.0], 0.5, 1.0, Bad(lambda X: X), specs)


class TestConfig:
    @pytest.mark.parametrize(
        "kw", [dict(epsilon=0.5), dict(epsilon=0), dict(alpha=0), dict(lambda_max=0.0), dict(restarts=0)]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            CfConfig(**kw)


def test_one_dimensional_sigmoid_lands_in_preimage_band():
    data, model = sigmoid_1d()
    cfg = CfConfig(epsilon=0.01, restarts=2)
    r = generate([-2.0], 0.5, model, data, cfg)
    lo, hi = np.log(0.49 / 0.51), np.log(0.51 / 0.49)
    assert r.valid and lo <= r.x_cf[0] <= hi


def test_vacuous_when_already_at_target():
    data, model = sigmoid_1d()
    r = generate([0.0], 0.5, model, data, FAST)
    assert r.valid and r.distance == 0 and r.size == 0 and np.array_equal(r.x_cf, [0.0])


def test_target_range_checked():
    data, model = sigmoid_1d()
    with pytest.raises(ValueError):
        generate([0.0], 0.99, model, data, FAST)


def test_no_mutable_features():
    data, model = sigmoid_1d()
    frozen = data.with_specs([FeatureSpec("x", -5, 5, False, mad=1.0)])
    with pytest.raises(ValueError):
        generate([-2.0], 0.5, model, frozen, FAST)


def test_lambda_max_reached_returns_best_effort():
    # score can never exceed 0.3, so target 0.9 is unreachable
    data, _ = sigmoid_1d()
    model = FunctionPredictor(lambda X: 0.3 / (1 + np.exp(-X[:, 0])))
    r = generate([-2.0], 0.9, model, data, CfConfig(restarts=1, lambda_max=5.0))
    assert not r.valid
    assert r.lambda_final <= 5.0


def test_negative_crosses_the_boundary(small, small_logreg):
    rejected = np.flatnonzero(small_logreg.classify(small.records) == 0)[:5]
    for i in rejected:
        r = generate_negative(small.records[i], small_logreg, small, FAST)
        assert r.valid and small_logreg.score(r.x_cf) >= 0.5
        assert small_logreg.classify(r.x_cf) == 1
        assert r.kind == "negative"


def test_preconditions(small, small_logreg):
    labels = small_logreg.classify(small.records)
    acc = small.records[np.flatnonzero(labels == 1)[0]]
    rej = small.records[np.flatnonzero(labels == 0)[0]]
    with pytest.raises(ValueError):
        generate_negative(acc, small_logreg, small, FAST)
    with pytest.raises(ValueError):
        generate_positive(rej, small_logreg, small, FAST)
    assert explain_auto(acc, small_logreg, small, FAST).kind == "positive"
    assert explain_auto(rej, small_logreg, small, FAST).kind == "negative"


def test_positive_margin(small, small_logreg):
    scores = small_logreg.score(small.records)
    rows = np.flatnonzero(scores > 0.55)[:5]
    for i in rows:
        r = generate_positive(small.records[i], small_logreg, small, FAST)
        assert abs(r.y_achieved - 0.5) <= r.epsilon
        assert r.distance > 0


def test_invariants_and_immutables(small, small_logreg):
    specs = list(small.specs)
    specs[1] = FeatureSpec(specs[1].name, specs[1].lower, specs[1].upper, False, mad=specs[1].mad)
    data = small.with_specs(specs)
    rows = np.flatnonzero(small_logreg.classify(data.records) == 0)[:6]
    results = generate_many(data.records[rows], 0.55, small_logreg, data, FAST)
    for x, r in zip(data.records[rows], results):
        assert r.x_cf[1] == x[1] and r.deltas[1] == 0
        assert np.all(r.x_cf >= data.lower) and np.all(r.x_cf <= data.upper)
        assert np.array_equal(r.deltas, r.x_cf - r.x_original)
        assert r.valid == (abs(r.y_achieved - r.y_target) <= r.epsilon)
        assert r.size == int(np.sum(np.abs(r.deltas) > change_thresholds(data.specs)))
        lams = [t[0] for t in r.trace]
        assert lams == sorted(lams)


def test_deterministic(small, small_logreg):
    x = small.records[np.flatnonzero(small_logreg.classify(small.records) == 0)[0]]
    a = generate_negative(x, small_logreg, small, FAST)
    b = generate_negative(x, small_logreg, small, FAST)
    assert np.array_equal(a.x_cf, b.x_cf) and a.trace == b.trace


def test_batch_result_independent_of_companions(small, small_logreg):
    rows = np.flatnonzero(small_logreg.classify(small.records) == 0)[:4]
    together = generate_many(small.records[rows], 0.55, small_logreg, small, FAST)
    alone = generate_many(small.records[rows[2:3]], 0.55, small_logreg, small, FAST)
    assert np.array_equal(together[2].x_cf, alone[0].x_cf)


def test_all_ones_theta_matches_baseline(small, small_logreg):
    rows = np.flatnonzero(small_logreg.classify(small.records) == 0)[:4]
    base = generate_many(small.records[rows], 0.55, small_logreg, small, FAST)
    ones = generate_many(
        small.records[rows], 0.55, small_logreg, small, FAST.with_theta(WeightVector(np.ones(small.p)))
    )
    for a, b in zip(base, ones):
        assert np.array_equal(a.x_cf, b.x_cf) and a.distance == b.distance


def test_plateau_skip_lands_on_the_grid():
    # the skipped weights must still be lambda_init + n * alpha
    data, model = sigmoid_1d()
    cfg = CfConfig(restarts=1, alpha=0.25)
    r = generate([-4.0], 0.55, model, data, cfg)
    for lam, _ in r.trace:
        assert (lam / 0.25) == pytest.approx(round(lam / 0.25), abs=1e-9)


@settings(max_examples=15, deadline=None)
@given(st.floats(-4.5, -0.5), st.floats(0.05, 0.2))
def test_sigmoid_valid_results_respect_tolerance(x0, eps):
    data, model = sigmoid_1d()
    r = generate([x0], 0.5, model, data, CfConfig(epsilon=eps, restarts=1))
    assert r.valid
    assert abs(1 / (1 + np.exp(-r.x_cf[0])) - 0.5) <= eps
