import json

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfexplain.data import (
    Dataset,
    FeatureSpec,
    build_specs,
    compute_mad,
    gen_synthetic,
    infer_decimals,
    load_csv,
    load_metadata,
    mad_fallback,
    preprocess,
)

from conftest import toy_dataset


def median_oracle(values):
    s = sorted(values)
    n = len(s)
    return s[n // 2] if n % 2 else (s[n // 2 - 1] + s[n // 2]) / 2


def mad_oracle(values):
    m = median_oracle(values)
    return median_oracle([abs(v - m) for v in values])


class TestComputeMad:
    def test_small_example(self):
        assert compute_mad([1, 2, 3, 4, 100]) == 1.0

    def test_even_length(self):
        # median 2.5, deviations 1.5 .5 .5 1.5
        assert compute_mad([1, 2, 3, 4]) == 1.0

    def test_constant_column_is_zero(self):
        assert compute_mad([7.0] * 5) == 0.0

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            compute_mad([])

    @given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=60))
    def test_matches_oracle(self, values):
        assert compute_mad(values) == pytest.approx(mad_oracle(values), rel=1e-12, abs=1e-9)

    @given(
        st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=40),
        st.floats(-1e3, 1e3),
    )
    def test_shift_invariant(self, values, c):
        shifted = [v + c for v in values]
        assert compute_mad(shifted) == pytest.approx(compute_mad(values), abs=1e-6)


def test_mad_fallback_on_sparse_column():
    col = np.array([0, 0, 0, 0, 0, 0, 10.0])
    assert compute_mad(col) == 0
    expected = 1.4826 * np.mean(np.abs(col - col.mean()))
    assert mad_fallback(col) == pytest.approx(expected)


class TestSpecs:
    def test_constant_column_becomes_immutable(self):
        specs = build_specs(np.column_stack([np.arange(10.0), np.full(10, 3.0)]))
        assert specs[0].mutable and not specs[1].mutable
        assert specs[1].mad == 0 and specs[1].mad_fallback_used

    def test_sparse_column_uses_fallback(self):
        col = np.array([0, 0, 0, 0, 0, 0, 10.0])
        spec = build_specs(col[:, None])[0]
        assert spec.mad_fallback_used and spec.mad > 0 and spec.mutable

    def test_metadata_overrides_bounds_and_mutability(self):
        rec = np.arange(20.0).reshape(10, 2)
        specs = build_specs(rec, ["a", "b"], {"a": {"lower": -100, "mutable": False}})
        assert specs[0].lower == -100 and not specs[0].mutable
        assert specs[1].lower == 1 and specs[1].upper == 19

    def test_unknown_metadata_name(self):
        with pytest.raises(ValueError):
            build_specs(np.ones((3, 1)), ["a"], {"zzz": {}})

    def test_featurespec_validation(self):
        with pytest.raises(ValueError):
            FeatureSpec("a", 2.0, 1.0)
        with pytest.raises(ValueError):
            FeatureSpec("a", 0.0, 1.0, True, mad=0.0)
        with pytest.raises(ValueError):
            FeatureSpec("a", 0.0, float("inf"))

    def test_infer_decimals(self):
        assert infer_decimals([30000, 35000]) == 0
        assert infer_decimals([0.5, 1.25]) == 2


class TestDataset:
    def test_read_only(self):
        d = toy_dataset(np.arange(12.0).reshape(6, 2), [0, 1] * 3)
        with pytest.raises(ValueError):
            d.records[0, 0] = 5

    def test_rejects_nan(self):
        rec = np.arange(12.0).reshape(6, 2)
        specs = build_specs(rec)
        rec[0, 0] = np.nan
        with pytest.raises(ValueError):
            Dataset(rec, np.array([0, 1] * 3), specs)

    def test_properties(self):
        d = toy_dataset(np.arange(12.0).reshape(6, 2), [0, 1] * 3, ["a", "b"])
        assert (d.n, d.p, d.names) == (6, 2, ["a", "b"])
        assert d.mutable.all()


def _write_csv(tmp_path, frame, name="d.csv"):
    path = tmp_path / name
    frame.to_csv(path, index=False)
    return path


class TestLoadCsv:
    def test_roundtrip(self, tmp_path):
        frame = pd.DataFrame({"a": [1.0, 2, 3, 4], "b": [5, 6, 7, 9], "y": ["Bad", "Good", "Bad", "Good"]})
        d = load_csv(_write_csv(tmp_path, frame), "y")
        assert d.targets.tolist() == [0, 1, 0, 1]
        assert d.names == ["a", "b"]

    def test_positive_label(self, tmp_path):
        frame = pd.DataFrame({"a": [1.0, 2, 3, 4], "y": ["Bad", "Good", "Bad", "Good"]})
        d = load_csv(_write_csv(tmp_path, frame), "y", positive_label="Bad")
        assert d.targets.tolist() == [1, 0, 1, 0]

    def test_errors(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_csv(tmp_path / "missing.csv", "y")
        frame = pd.DataFrame({"a": [1.0, None, 3, 4], "y": [0, 1, 0, 1]})
        with pytest.raises(ValueError, match="missing"):
            load_csv(_write_csv(tmp_path, frame), "y")
        frame = pd.DataFrame({"a": [1.0, 2, 3, 4], "y": [0, 1, 0, 1]})
        with pytest.raises(ValueError, match="target"):
            load_csv(_write_csv(tmp_path, frame), "label")
        frame = pd.DataFrame({"a": ["x", "2", "3", "4"], "y": [0, 1, 0, 1]})
        with pytest.raises(ValueError, match="non-numeric"):
            load_csv(_write_csv(tmp_path, frame), "y")
        frame = pd.DataFrame({"a": [1.0, 2, 3], "y": [0, 1, 1]})
        with pytest.raises(ValueError, match="2 rows per class"):
            load_csv(_write_csv(tmp_path, frame), "y")
        frame = pd.DataFrame({"a": [1.0, 2, 3], "y": [0, 1, 2]})
        with pytest.raises(ValueError, match="two classes"):
            load_csv(_write_csv(tmp_path, frame), "y")

    def test_metadata_file(self, tmp_path):
        meta = tmp_path / "m.json"
        meta.write_text(json.dumps({"a": {"mutable": False, "upper": 10}}))
        frame = pd.DataFrame({"a": [1.0, 2, 3, 4], "b": [1.0, 3, 2, 4], "y": [0, 1, 0, 1]})
        d = load_csv(_write_csv(tmp_path, frame), "y", metadata=load_metadata(meta))
        assert not d.specs[0].mutable and d.specs[0].upper == 10

    def test_bad_metadata(self, tmp_path):
        meta = tmp_path / "m.json"
        meta.write_text(json.dumps({"a": {"weight": 3}}))
        with pytest.raises(ValueError):
            load_metadata(meta)


class TestPreprocess:
    def test_duplicates_collapse_to_first(self):
        rec = [[1, 2], [1, 2], [3, 1], [4, 7], [5, 0]]
        d = preprocess(toy_dataset(rec, [1, 1, 0, 1, 0]))
        assert d.n == 4
        assert d.records[:, 0].tolist() == [1, 3, 4, 5]

    def test_same_features_different_label_kept(self):
        rec = [[1, 2], [1, 2], [3, 1], [4, 7], [5, 0]]
        d = preprocess(toy_dataset(rec, [0, 1, 0, 1, 0]))
        assert d.n == 5

    def test_correlated_column_drops_later(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=50)
        rec = np.column_stack([a, 2 * a + 1, rng.normal(size=50)])
        d = preprocess(toy_dataset(rec, np.arange(50) % 2, ["a", "a2", "c"]))
        assert d.names == ["a", "c"]

    def test_sentinel_rows_dropped(self):
        rec = [[-9, -9], [1, 2], [2, 5], [3, 1], [4, 4]]
        d = preprocess(toy_dataset(rec, [0, 1, 0, 1, 0]), drop_sentinel=-9)
        assert d.n == 4

    def test_keeps_user_bounds_and_flags(self):
        rec = np.arange(20.0).reshape(10, 2) % 7
        raw = toy_dataset(rec, np.arange(10) % 2, ["a", "b"], {"b": {"mutable": False, "lower": -5}})
        d = preprocess(raw, corr_threshold=1.0)
        assert not d.specs[1].mutable and d.specs[1].lower == -5


class TestSynthetic:
    def test_shape_and_balance(self, synth):
        assert (synth.n, synth.p) == (2000, 20)
        assert synth.targets.sum() == 1000

    def test_deterministic(self):
        a, b = gen_synthetic(300, 5, seed=4), gen_synthetic(300, 5, seed=4)
        assert np.array_equal(a.records, b.records) and np.array_equal(a.targets, b.targets)

    def test_informative_columns_separate_classes(self, synth):
        means = [synth.records[synth.targets == c, 0].mean() for c in (0, 1)]
        assert means[1] > means[0]

    @settings(max_examples=10, deadline=None)
    @given(st.integers(100, 400), st.integers(2, 8), st.integers(0, 1000))
    def test_bounds_hold_records(self, n, p, seed):
        d = gen_synthetic(n, p, seed=seed)
        assert np.all(d.records >= d.lower) and np.all(d.records <= d.upper)
        assert all(s.mad > 0 for s in d.specs)
