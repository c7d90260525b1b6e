import json

import numpy as np
import pytest

from imbf.data import (
    Dataset,
    fit_standardizer,
    inspect,
    load_csv,
    make_synthetic,
    resolve_missing,
    standardize_fit_transform,
    stratified_kfold,
    subsample_majority,
    write_csv,
)
from imbf.errors import (
    EmptyDatasetError,
    InsufficientMinorityError,
    LabelError,
    MissingValuesError,
    ParseError,
    SchemaError,
)
from imbf.learners import ClassifierSpec
from imbf.evaluation import roc_auc

from conftest import kaggle_like


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadCsv:
    def test_three_row_generic(self, tmp_path):
        p = write(tmp_path, "a,b,label\n1.5,2,0\n3,4,1\n5,6,0\n")
        ds = load_csv(p, "generic")
        assert ds.labels.tolist() == [0, 1, 0]
        assert ds.n_cols == 2
        assert ds.feature_names == ("a", "b")
        assert ds.row_ids.tolist() == [0, 1, 2]
        assert ds.features[0].tolist() == [1.5, 2.0]

    def test_kaggle_quoted_header_and_labels(self, tmp_path):
        cols = ["Time", *[f"V{i}" for i in range(1, 29)], "Amount", "Class"]
        header = ",".join(f'"{c}"' for c in cols)
        rows = [",".join(["0"] * 30 + ['"0"']), ",".join(["1"] * 30 + ['"1"'])]
        ds = load_csv(write(tmp_path, header + "\n" + "\n".join(rows) + "\n"))
        assert ds.n_cols == 30
        assert ds.labels.tolist() == [0, 1]

    def test_kaggle_missing_column(self, tmp_path):
        with pytest.raises(SchemaError, match="V3"):
            load_csv(write(tmp_path, "Time,V1,V2,Amount,Class\n0,0,0,0,0\n"))

    def test_empty_data(self, tmp_path):
        with pytest.raises(EmptyDatasetError):
            load_csv(write(tmp_path, "a,b,label\n"), "generic")

    def test_no_header(self, tmp_path):
        with pytest.raises(SchemaError):
            load_csv(write(tmp_path, ""), "generic")
        with pytest.raises(SchemaError):
            load_csv(write(tmp_path, "1,2,0\n3,4,1\n"), "generic")

    def test_non_numeric_cell_reports_position(self, tmp_path):
        p = write(tmp_path, "a,b,label\n1,2,0\n3,oops,1\n")
        with pytest.raises(ParseError) as e:
            load_csv(p, "generic")
        assert e.value.row == 2 and e.value.col == "b"
        assert "oops" in str(e.value)

    def test_bad_label(self, tmp_path):
        with pytest.raises(LabelError, match="row 2"):
            load_csv(write(tmp_path, "a,label\n1,0\n2,2\n"), "generic")

    def test_missing_cell_kept_as_nan(self, tmp_path):
        ds = load_csv(write(tmp_path, "a,b,label\n1,,0\n3,4,1\n"), "generic")
        assert np.isnan(ds.features[0, 1])
        assert inspect(ds).missing_per_column == {"a": 0, "b": 1}

    def test_round_trip(self, tmp_path):
        ds = kaggle_like(50, 5)
        p = tmp_path / "rt.csv"
        write_csv(ds, p)
        back = load_csv(p)
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.labels, ds.labels)


class TestInspect:
    def test_fraction_exact(self):
        ds = make_synthetic(990, 10, 3, 1.0, 0)
        rep = inspect(ds)
        assert rep.fraud_fraction == 10 / 1000
        assert rep.n_fraud == 10 and rep.n_rows == 1000

    def test_all_zero_labels(self):
        ds = Dataset(np.zeros((4, 1)), [0, 0, 0, 0], ["a"])
        assert inspect(ds).fraud_fraction == 0.0

    def test_two_point_stats(self):
        ds = Dataset(np.array([[1.0], [3.0]]), [0, 1], ["a"])
        assert inspect(ds).per_column_stats["a"] == (1.0, 3.0, 2.0, 1.0)

    def test_serializable(self):
        rep = inspect(make_synthetic(20, 5, 2, 1.0, 0))
        json.dumps(rep.to_dict())
        assert "fraud_fraction=0.20000" in rep.summary()

    def test_empty(self):
        with pytest.raises(EmptyDatasetError):
            inspect(Dataset(np.zeros((0, 2)), [], ["a", "b"]))


class TestDatasetInvariants:
    def test_length_mismatch(self):
        with pytest.raises(SchemaError):
            Dataset(np.zeros((3, 2)), [0, 1], ["a", "b"])

    def test_immutable(self):
        ds = make_synthetic(5, 5, 2, 1.0, 0)
        with pytest.raises(ValueError):
            ds.features[0, 0] = 1.0

    def test_training_rejects_missing(self):
        ds = Dataset(np.array([[np.nan], [1.0], [2.0]]), [0, 1, 0], ["a"])
        with pytest.raises(MissingValuesError):
            ClassifierSpec("logistic").build().fit(ds)

    def test_missing_policies(self):
        ds = Dataset(np.array([[np.nan, 1.0], [1.0, 2.0], [3.0, 3.0]]), [0, 1, 0], ["a", "b"])
        with pytest.raises(MissingValuesError):
            resolve_missing(ds, "reject")
        dropped = resolve_missing(ds, "drop")
        assert dropped.row_ids.tolist() == [1, 2]
        imputed = resolve_missing(ds, "impute")
        assert imputed.features[0, 0] == 2.0


class TestStandardize:
    def test_two_values(self):
        ds = Dataset(np.array([[0.0], [2.0]]), [0, 1], ["a"])
        _, tr, _ = standardize_fit_transform(ds)
        assert tr.features.ravel().tolist() == [-1.0, 1.0]

    def test_train_moments(self, rng):
        ds = Dataset(rng.normal(5, 3, (200, 4)), rng.integers(0, 2, 200), list("abcd"))
        _, tr, _ = standardize_fit_transform(ds)
        np.testing.assert_allclose(tr.features.mean(0), 0, atol=1e-9)
        np.testing.assert_allclose(tr.features.std(0), 1, rtol=1e-9)

    def test_round_trip_and_not_idempotent(self, rng):
        ds = Dataset(rng.normal(5, 3, (50, 3)), rng.integers(0, 2, 50), list("abc"))
        sc = fit_standardizer(ds)
        Z = sc.transform(ds.features)
        assert not np.allclose(sc.transform(Z), Z)
        np.testing.assert_allclose(sc.inverse_transform(Z), ds.features, rtol=0, atol=1e-12)

    def test_test_row_at_mean_maps_to_zero(self, rng):
        train = Dataset(rng.normal(size=(30, 3)), rng.integers(0, 2, 30), list("abc"))
        sc = fit_standardizer(train)
        test = Dataset(sc.mean[None, :], [1], list("abc"))
        _, _, (t,) = standardize_fit_transform(train, [test])
        np.testing.assert_array_equal(t.features, np.zeros((1, 3)))

    def test_uses_train_statistics_only(self, rng):
        train = Dataset(rng.normal(size=(30, 2)), rng.integers(0, 2, 30), ["a", "b"])
        test = Dataset(rng.normal(100, 1, (10, 2)), rng.integers(0, 2, 10), ["a", "b"])
        sc, _, (t,) = standardize_fit_transform(train, [test])
        np.testing.assert_allclose(t.features, (test.features - train.features.mean(0)) / train.features.std(0))

    def test_constant_column(self, caplog):
        ds = Dataset(np.array([[1.0, 7.0], [2.0, 7.0], [3.0, 7.0]]), [0, 1, 0], ["a", "c"])
        sc, tr, _ = standardize_fit_transform(ds)
        assert sc.constant_columns == ("c",)
        assert tr.features[:, 1].tolist() == [0.0, 0.0, 0.0]
        assert "constant" in caplog.text


class TestStratifiedKFold:
    def test_exact_balance(self):
        ds = Dataset(np.zeros((10, 1)), [1] * 5 + [0] * 5, ["a"])
        plan = stratified_kfold(ds, 5, seed=3)
        for f in range(5):
            idx = plan.test_index(f)
            assert sorted(ds.labels[idx].tolist()) == [0, 1]

    def test_one_positive_per_fold(self):
        ds = make_synthetic(90, 10, 2, 1.0, 0)
        plan = stratified_kfold(ds, 10, seed=0)
        for f in range(10):
            assert ds.labels[plan.test_index(f)].sum() == 1

    def test_partition_and_stratification(self):
        ds = make_synthetic(977, 23, 2, 1.0, 4)
        plan = stratified_kfold(ds, 10, seed=7)
        assert sorted(np.concatenate([plan.test_index(f) for f in range(10)]).tolist()) == list(range(1000))
        pos = [ds.labels[plan.test_index(f)].sum() for f in range(10)]
        assert max(pos) - min(pos) <= 1
        sizes = [len(plan.test_index(f)) for f in range(10)]
        assert max(sizes) - min(sizes) <= 1

    def test_seeded(self):
        ds = make_synthetic(200, 20, 2, 1.0, 0)
        a = stratified_kfold(ds, 5, 1).assignments
        np.testing.assert_array_equal(a, stratified_kfold(ds, 5, 1).assignments)
        assert not np.array_equal(a, stratified_kfold(ds, 5, 2).assignments)

    def test_too_few_minority(self):
        ds = make_synthetic(100, 3, 2, 1.0, 0)
        with pytest.raises(InsufficientMinorityError):
            stratified_kfold(ds, 5, 0)


class TestSynthetic:
    def test_fraction(self):
        assert inspect(make_synthetic(990, 10, 2, 1.0, 0)).fraud_fraction == 0.01

    def test_deterministic(self):
        a, b = make_synthetic(50, 5, 3, 1.0, 9), make_synthetic(50, 5, 3, 1.0, 9)
        np.testing.assert_array_equal(a.features, b.features)

    def test_no_signal(self):
        train, test = make_synthetic(1000, 1000, 4, 0.0, 1), make_synthetic(1000, 1000, 4, 0.0, 2)
        m = ClassifierSpec("logistic", {"epochs": 5}).build().fit(train)
        assert abs(roc_auc(test.labels, m.predict_proba(test.features))[1] - 0.5) <= 0.05

    def test_well_separated(self):
        train, test = make_synthetic(500, 500, 4, 6.0, 1), make_synthetic(500, 500, 4, 6.0, 2)
        m = ClassifierSpec("logistic", {"epochs": 5}).build().fit(train)
        assert roc_auc(test.labels, m.predict_proba(test.features))[1] > 0.99

    def test_subsample_keeps_minority(self):
        ds = make_synthetic(1000, 30, 2, 1.0, 0)
        sub = subsample_majority(ds, 100, seed=1)
        assert sub.n_fraud == 30 and sub.n_rows == 130
        assert np.all(np.diff(sub.row_ids) > 0)
        np.testing.assert_array_equal(sub.row_ids, subsample_majority(ds, 100, seed=1).row_ids)
