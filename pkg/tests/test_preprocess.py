import json

import numpy as np
import numpy.testing as npt
import pandas as pd
import pytest

from fairrep.preprocess import (
    AllMissingColumn,
    DEFAULT_MORTALITY,
    EmptyResult,
    FeatureMatrix,
    InvalidConfig,
    InvalidFractions,
    RawTable,
    SynthConfig,
    aggregate_encounters,
    filter_missingness,
    impute_median,
    one_hot_encode,
    split,
    synth_generate,
    table_to_feature_matrix,
    zscore_apply,
    zscore_normalize,
)


def make_table(columns: dict, kinds: dict) -> RawTable:
    return RawTable(pd.DataFrame(columns), kinds)


class TestFilterMissingness:
    def test_below_threshold_dropped_full_retained(self):
        t = make_table(
            {
                "pid": ["a", "b", "c", "d", "e"],
                "sparse": [1.0, np.nan, np.nan, 4.0, 5.0],  # 60% present
                "full": [1.0, 2.0, 3.0, 4.0, 5.0],
            },
            {"pid": "id", "sparse": "numeric", "full": "numeric"},
        )
        out = filter_missingness(t, 0.70)
        assert list(out.frame.columns) == ["pid", "full"]

    def test_exactly_at_threshold_kept(self):
        col = [1.0] * 7 + [np.nan] * 3  # exactly 70% present
        t = make_table(
            {"pid": list("abcdefghij"), "edge": col},
            {"pid": "id", "edge": "numeric"},
        )
        out = filter_missingness(t, 0.70)
        assert "edge" in out.frame.columns

    def test_all_dropped_raises(self):
        t = make_table(
            {"pid": ["a", "b"], "x": [np.nan, np.nan]},
            {"pid": "id", "x": "numeric"},
        )
        with pytest.raises(EmptyResult):
            filter_missingness(t)


class TestImputeMedian:
    def test_median_of_two(self):
        t = make_table(
            {"pid": ["a", "b", "c"], "x": [1.0, np.nan, 3.0]},
            {"pid": "id", "x": "numeric"},
        )
        npt.assert_array_equal(impute_median(t).frame["x"], [1.0, 2.0, 3.0])

    def test_no_missing_unchanged(self):
        t = make_table(
            {"pid": ["a", "b"], "x": [1.5, 2.5]}, {"pid": "id", "x": "numeric"}
        )
        npt.assert_array_equal(impute_median(t).frame["x"], [1.5, 2.5])

    def test_single_present_value(self):
        t = make_table(
            {"pid": ["a", "b"], "x": [5.0, np.nan]}, {"pid": "id", "x": "numeric"}
        )
        npt.assert_array_equal(impute_median(t).frame["x"], [5.0, 5.0])

    def test_all_missing_raises(self):
        t = make_table(
            {"pid": ["a"], "x": [np.nan]}, {"pid": "id", "x": "numeric"}
        )
        with pytest.raises(AllMissingColumn):
            impute_median(t)


class TestZscore:
    def test_hand_example(self):
        t = make_table({"pid": ["a", "b", "c"], "x": [1.0, 2.0, 3.0]}, {"pid": "id", "x": "numeric"})
        out, stats = zscore_normalize(t)
        npt.assert_allclose(out.frame["x"], [-1.2247448714, 0.0, 1.2247448714], atol=1e-9)
        assert stats["x"]["mean"] == 2.0

    def test_constant_column_maps_to_zero(self):
        t = make_table({"pid": ["a", "b", "c"], "x": [7.0, 7.0, 7.0]}, {"pid": "id", "x": "numeric"})
        out, _ = zscore_normalize(t)
        npt.assert_array_equal(out.frame["x"], [0.0, 0.0, 0.0])

    def test_idempotent_on_standardized(self):
        t = make_table(
            {"pid": list("abcd"), "x": [-1.0, 1.0, -1.0, 1.0]}, {"pid": "id", "x": "numeric"}
        )
        out, _ = zscore_normalize(t)
        npt.assert_allclose(out.frame["x"], t.frame["x"], atol=1e-12)

    def test_moments(self):
        rng = np.random.default_rng(0)
        t = make_table(
            {"pid": [str(i) for i in range(200)], "x": rng.uniform(5, 50, 200)},
            {"pid": "id", "x": "numeric"},
        )
        out, _ = zscore_normalize(t)
        x = out.frame["x"].to_numpy()
        assert abs(x.mean()) <= 1e-10
        assert abs(x.std(ddof=0) - 1.0) <= 1e-10

    def test_apply_uses_stored_stats(self):
        t = make_table({"pid": ["a", "b"], "x": [0.0, 10.0]}, {"pid": "id", "x": "numeric"})
        _, stats = zscore_normalize(t)
        held_out = make_table({"pid": ["z"], "x": [5.0]}, {"pid": "id", "x": "numeric"})
        out = zscore_apply(held_out, stats)
        assert out.frame["x"].iloc[0] == 0.0  # (5 - 5) / 5, not refit


class TestOneHot:
    def test_two_values_two_columns(self):
        t = make_table(
            {"pid": ["a", "b"], "gender": ["F", "M"]},
            {"pid": "id", "gender": "categorical"},
        )
        out = one_hot_encode(t)
        assert list(out.frame.columns) == ["pid", "gender=F", "gender=M"]
        npt.assert_array_equal(out.frame["gender=F"], [1.0, 0.0])

    def test_single_value_all_ones(self):
        t = make_table(
            {"pid": ["a", "b"], "c": ["x", "x"]}, {"pid": "id", "c": "categorical"}
        )
        out = one_hot_encode(t)
        npt.assert_array_equal(out.frame["c=x"], [1.0, 1.0])

    def test_rows_sum_to_one(self):
        t = make_table(
            {"pid": list("abcde"), "c": ["r", "g", "b", "g", "r"]},
            {"pid": "id", "c": "categorical"},
        )
        out = one_hot_encode(t)
        onehot = out.frame[[c for c in out.frame.columns if c.startswith("c=")]]
        assert onehot.shape[1] == 3
        npt.assert_array_equal(onehot.sum(axis=1), np.ones(5))

    def test_mode_imputation_prefers_lexicographic(self):
        t = make_table(
            {"pid": list("abcd"), "c": ["b", "a", None, None]},
            {"pid": "id", "c": "categorical"},
        )
        out = one_hot_encode(t)
        npt.assert_array_equal(out.frame["c=a"], [0.0, 1.0, 1.0, 1.0])


class TestAggregate:
    def test_mean_of_two_encounters(self):
        t = make_table(
            {"pid": ["p1", "p1"], "x": [1.0, 3.0]}, {"pid": "id", "x": "numeric"}
        )
        out = aggregate_encounters(t)
        npt.assert_array_equal(out.frame["x"], [2.0])

    def test_single_encounter_unchanged(self):
        t = make_table({"pid": ["p1"], "x": [4.5]}, {"pid": "id", "x": "numeric"})
        npt.assert_array_equal(aggregate_encounters(t).frame["x"], [4.5])

    def test_three_encounters(self):
        t = make_table(
            {"pid": ["p1"] * 3, "x": [0.0, 0.0, 3.0]}, {"pid": "id", "x": "numeric"}
        )
        npt.assert_array_equal(aggregate_encounters(t).frame["x"], [1.0])

    def test_commutes_with_column_permutation(self):
        frame = {
            "pid": ["p1", "p2", "p1"],
            "x": [1.0, 2.0, 3.0],
            "y": [0.0, 5.0, 1.0],
        }
        kinds = {"pid": "id", "x": "numeric", "y": "numeric"}
        a = aggregate_encounters(make_table(frame, kinds))
        permuted = {"y": frame["y"], "pid": frame["pid"], "x": frame["x"]}
        b = aggregate_encounters(make_table(permuted, kinds))
        npt.assert_array_equal(a.frame["x"], b.frame["x"])
        npt.assert_array_equal(a.frame["y"], b.frame["y"])


class TestPipelineChain:
    def test_full_chain_no_missing_finite(self):
        t = make_table(
            {
                "pid": ["p1", "p1", "p2", "p2", "p3"],
                "lab": [1.0, np.nan, 3.0, 4.0, 5.0],
                "sparse": [np.nan, np.nan, np.nan, np.nan, 2.0],
                "dx": ["a", "b", None, "a", "b"],
                "grp": ["m", "m", "f", "f", "m"],
                "y": [0.0, 0.0, 1.0, 1.0, 0.0],
            },
            {
                "pid": "id",
                "lab": "numeric",
                "sparse": "numeric",
                "dx": "categorical",
                "grp": "categorical",
                "y": "numeric",
            },
        )
        out = filter_missingness(t, 0.70)
        assert "sparse" not in out.frame.columns
        out = impute_median(out)
        out, _ = zscore_normalize(out)
        out = one_hot_encode(out)
        out = aggregate_encounters(out)
        assert out.frame.notna().all().all()
        numeric = out.frame.drop(columns=["pid"]).to_numpy(dtype=np.float64)
        assert np.isfinite(numeric).all()
        assert len(out.frame) == 3


class TestRawTableIO:
    def test_csv_missing_tokens(self, tmp_path):
        csv = tmp_path / "raw.csv"
        csv.write_text("pid,x,c\np1,1.5,\np2,NA,blue\n")
        schema = tmp_path / "raw.json"
        schema.write_text(json.dumps({"pid": "id", "x": "numeric", "c": "categorical"}))
        t = RawTable.from_csv(csv, schema)
        assert np.isnan(t.frame["x"].iloc[1])
        assert t.frame["c"].isna().iloc[0]
        assert t.frame["c"].iloc[1] == "blue"


class TestSynthGenerate:
    def test_group_proportions(self):
        fm = synth_generate(SynthConfig(n_patients=20000, seed=1))
        female_frac = float(np.mean(fm.group == "female"))
        assert abs(female_frac - 0.44) < 0.02

    def test_calibrated_mortality_rates(self):
        fm = synth_generate(SynthConfig(n_patients=20000, seed=2))
        y30 = fm.labels["30d"]
        female = fm.group == "female"
        assert abs(y30[female].mean() - DEFAULT_MORTALITY["female"][0]) < 0.02
        assert abs(y30[~female].mean() - DEFAULT_MORTALITY["male"][0]) < 0.02

    def test_bit_identical_given_seed(self):
        a = synth_generate(SynthConfig(n_patients=500, seed=3))
        b = synth_generate(SynthConfig(n_patients=500, seed=3))
        npt.assert_array_equal(a.values, b.values)
        npt.assert_array_equal(a.group, b.group)
        for h in a.labels:
            npt.assert_array_equal(a.labels[h], b.labels[h])

    def test_nested_labels(self):
        fm = synth_generate(SynthConfig(n_patients=5000, seed=4))
        y = np.column_stack([fm.labels[h] for h in ("30d", "60d", "90d", "365d")])
        assert (np.diff(y, axis=1) >= 0).all()

    def test_invalid_config(self):
        with pytest.raises(InvalidConfig):
            synth_generate(SynthConfig(n_patients=0))
        with pytest.raises(InvalidConfig):
            synth_generate(SynthConfig(groups={"a": 0.6, "b": 0.6}))
        bad_rates = {"female": (0.5, 0.4, 0.6, 0.7), "male": (0.1, 0.2, 0.3, 0.4)}
        with pytest.raises(InvalidConfig):
            synth_generate(SynthConfig(mortality=bad_rates))

    def test_feature_width(self):
        cfg = SynthConfig(n_patients=50, n_numeric=10, n_categorical=2, categorical_levels=3)
        fm = synth_generate(cfg)
        assert fm.n_features == 10 + 2 * 3


class TestSplit:
    def test_degenerate_all_train(self):
        fm = synth_generate(SynthConfig(n_patients=40, seed=5))
        train, val, test = split(fm, (1.0, 0.0, 0.0), seed=0)
        assert train.n_patients == 40
        assert val.n_patients == 0 and test.n_patients == 0
        assert train.ids == fm.ids

    def test_exact_global_sizes(self):
        fm = synth_generate(SynthConfig(n_patients=100, seed=6))
        train, val, test = split(fm, (0.8, 0.1, 0.1), seed=1)
        assert (train.n_patients, val.n_patients, test.n_patients) == (80, 10, 10)
        assert sorted(train.ids + val.ids + test.ids) == sorted(fm.ids)

    def test_stratification_within_one(self):
        cfg = SynthConfig(
            n_patients=400,
            groups={"a": 0.5, "b": 0.5},
            mortality={"a": (0.3, 0.3, 0.3, 0.3), "b": (0.3, 0.3, 0.3, 0.3)},
            seed=7,
        )
        fm = synth_generate(cfg)
        parts = split(fm, (0.6, 0.2, 0.2), seed=2)
        fracs = (0.6, 0.2, 0.2)
        for g in ("a", "b"):
            for yv in (0, 1):
                cell = (fm.group == g) & (fm.labels["30d"] == yv)
                cell_ids = {fm.ids[i] for i in np.flatnonzero(cell)}
                for part, f in zip(parts, fracs):
                    got = sum(1 for pid in part.ids if pid in cell_ids)
                    assert abs(got - f * len(cell_ids)) < 1.0

    def test_deterministic(self):
        fm = synth_generate(SynthConfig(n_patients=200, seed=8))
        a = split(fm, seed=3)
        b = split(fm, seed=3)
        for pa, pb in zip(a, b):
            assert pa.ids == pb.ids

    def test_invalid_fractions(self):
        fm = synth_generate(SynthConfig(n_patients=10, seed=9))
        with pytest.raises(InvalidFractions):
            split(fm, (0.5, 0.5, 0.5))


class TestFeatureMatrixIO:
    def test_round_trip(self, tmp_path):
        fm = synth_generate(SynthConfig(n_patients=30, seed=10))
        path = tmp_path / "matrix.csv"
        fm.save(path)
        back = FeatureMatrix.load(path)
        assert back.ids == fm.ids
        assert back.feature_names == fm.feature_names
        npt.assert_array_equal(back.values, fm.values)
        npt.assert_array_equal(back.group, fm.group)
        for h in fm.labels:
            npt.assert_array_equal(back.labels[h], fm.labels[h])

    def test_table_to_feature_matrix_excludes_reserved(self):
        t = make_table(
            {
                "pid": ["p1", "p2"],
                "x": [1.0, 2.0],
                "grp": ["f", "m"],
                "y30": [0.0, 1.0],
            },
            {"pid": "id", "x": "numeric", "grp": "categorical", "y30": "numeric"},
        )
        fm = table_to_feature_matrix(t, "grp", {"30d": "y30"})
        assert fm.feature_names == ["x"]
        npt.assert_array_equal(fm.labels["30d"], [0, 1])
