import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfexplain.weights import (
    anova_f,
    anova_f_all,
    complement_transform,
    global_theta,
    importance_profile,
    knn_changes,
    knn_theta,
    nearest_neighbors,
)

from conftest import toy_dataset


def anova_oracle(col, y):
    groups = [[v for v, t in zip(col, y) if t == c] for c in (0, 1)]
    grand = sum(col) / len(col)
    between = sum(len(g) * (sum(g) / len(g) - grand) ** 2 for g in groups)
    within = sum(sum((v - sum(g) / len(g)) ** 2 for v in g) for g in groups)
    return (between / 1) / (within / (len(col) - 2))


def test_anova_hand_example():
    # groups {1,2,3} and {4,5,6}: between 13.5, within 4, df 1 and 4
    d = toy_dataset([[1], [2], [3], [4], [5], [6]], [0, 0, 0, 1, 1, 1])
    assert anova_f(d, 0) == pytest.approx(13.5)


def test_anova_perfect_separation_is_inf_then_capped():
    d = toy_dataset([[0, 1], [0, 2], [1, 3], [1, 5]], [0, 0, 1, 1])
    assert anova_f(d, 0) == float("inf")
    f = anova_f_all(d)
    assert np.isfinite(f).all() and f[0] == f[1]


def test_anova_constant_column_is_zero():
    d = toy_dataset([[3, 1], [3, 2], [3, 3], [3, 5]], [0, 0, 1, 1])
    assert anova_f(d, 0) == 0.0


@settings(max_examples=100)
@given(st.integers(0, 2**31 - 1), st.integers(4, 40))
def test_anova_matches_oracle(seed, n):
    rng = np.random.default_rng(seed)
    col = rng.normal(size=n) * 10 ** rng.uniform(-3, 3)
    y = np.arange(n) % 2
    d = toy_dataset(col[:, None], y)
    assert anova_f(d, 0) == pytest.approx(anova_oracle(col.tolist(), y.tolist()), rel=1e-10)


def test_global_theta_favours_informative_features(synth):
    prof = importance_profile(synth)
    theta = prof.theta_global.theta
    # highest F gets the smallest weight
    assert np.argmax(prof.f_values) == np.argmin(theta)
    assert theta.mean() == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_theta_invariants(seed):
    rng = np.random.default_rng(seed)
    rec = rng.normal(size=(40, 5))
    y = np.arange(40) % 2
    rec[:, 0] += y * rng.uniform(0, 3)
    d = toy_dataset(rec, y, metadata={"x4": {"mutable": False}})
    for theta in (global_theta(d), knn_theta(d, rec[0], 1, k=5)):
        w = theta.theta
        assert w[4] == 0
        assert w[:4].mean() == pytest.approx(1.0)
        assert np.all(w >= 0)
    f = anova_f_all(d)[:4]
    w = global_theta(d).theta[:4]
    # monotone decreasing map: order of F reversed in theta
    for a in range(4):
        for b in range(4):
            if f[a] > f[b]:
                assert w[a] <= w[b]


def test_equal_scores_give_uniform():
    d = toy_dataset([[1, 1], [2, 2], [3, 3], [4, 4]], [0, 1, 0, 1])
    assert global_theta(d).to_list() == [1.0, 1.0]


def test_complement_transform_pluggable(synth):
    w = global_theta(synth, transform=complement_transform)
    assert w.theta.mean() == pytest.approx(1.0)


class TestKnn:
    def test_neighbours_are_desired_class_and_sorted(self, synth):
        x = synth.records[0]
        rows = nearest_neighbors(synth, x, 1, k=20)
        assert len(rows) == 20 and np.all(synth.targets[rows] == 1)
        dist = np.abs(synth.records[rows] - x) @ (1 / synth.mads)
        assert np.all(np.diff(dist) >= 0)

    def test_ties_go_to_lower_row(self):
        rec = [[0.0], [1.0], [-1.0], [1.0], [5.0], [2.0]]
        d = toy_dataset(rec, [0, 1, 1, 1, 0, 1])
        assert nearest_neighbors(d, [0.0], 1, k=3).tolist() == [1, 2, 3]

    def test_changes_are_mad_normalised(self):
        d = toy_dataset([[0.0, 0.0], [2.0, 10.0], [4.0, 20.0], [6.0, 30.0]], [0, 1, 1, 0])
        delta = knn_changes(d, [0.0, 0.0], 1, k=2)
        expected = np.array([3.0, 15.0]) / d.mads
        assert np.allclose(delta, expected)

    def test_too_few_records(self):
        d = toy_dataset([[0.0], [1.0], [2.0], [3.0]], [0, 1, 0, 1])
        with pytest.raises(ValueError):
            nearest_neighbors(d, [0.0], 1, k=3)
