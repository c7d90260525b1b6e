import json

import numpy as np
import pytest
from conftest import kaggle_like

from imbf.cli import main
from imbf.data import load_csv, make_synthetic, write_csv

FAST_ENSEMBLE = {
    "kind": "ensemble",
    "base_specs": [{"kind": "logistic", "hyperparameters": {"epochs": 3}},
                   {"kind": "cnn1d", "hyperparameters": {"epochs": 2}}],
    "meta_spec": {"kind": "gbt", "hyperparameters": {"n_rounds": 10}},
    "oof_folds": 2,
}


def write_config(path, **kw):
    cfg = {"version": 1, **kw}
    path.write_text(json.dumps(cfg))
    return path


def read_bytes(d, names):
    return {n: (d / n).read_bytes() for n in names}


class TestInspect:
    def test_summary_and_files(self, kaggle_csv, tmp_path, capsys):
        out = tmp_path / "o"
        assert main(["inspect", "--input", str(kaggle_csv), "--out", str(out)]) == 0
        assert "fraud_fraction=0.09091" in capsys.readouterr().out
        rep = json.loads((out / "inspection.json").read_text())
        assert rep["n_rows"] == 440 and rep["n_fraud"] == 40
        assert (out / "manifest.json").exists()

    def test_kaggle_fraction_format(self, tmp_path, capsys):
        path = tmp_path / "cc.csv"
        write_csv(kaggle_like(5808, 10, seed=2), path)
        assert main(["inspect", "--input", str(path), "--out", str(tmp_path / "o")]) == 0
        assert "fraud_fraction=0.00172" in capsys.readouterr().out

    def test_empty_file(self, tmp_path, capsys):
        path = tmp_path / "empty.csv"
        path.write_text("")
        assert main(["inspect", "--input", str(path), "--out", str(tmp_path / "o")]) == 2
        assert "empty" in capsys.readouterr().err.lower()

    def test_parse_error_names_cell(self, kaggle_csv, tmp_path, capsys):
        lines = kaggle_csv.read_text().splitlines()
        cells = lines[3].split(",")
        cells[2] = "abc"
        lines[3] = ",".join(cells)
        kaggle_csv.write_text("\n".join(lines) + "\n")
        assert main(["inspect", "--input", str(kaggle_csv), "--out", str(tmp_path / "o")]) == 2
        err = capsys.readouterr().err
        assert "V2" in err and "row" in err

    def test_missing_cell_counted(self, kaggle_csv, tmp_path):
        lines = kaggle_csv.read_text().splitlines()
        cells = lines[5].split(",")
        cells[4] = ""
        lines[5] = ",".join(cells)
        kaggle_csv.write_text("\n".join(lines) + "\n")
        out = tmp_path / "o"
        assert main(["inspect", "--input", str(kaggle_csv), "--out", str(out)]) == 0
        missing = json.loads((out / "inspection.json").read_text())["missing_per_column"]
        assert missing["V4"] == 1 and sum(missing.values()) == 1


class TestResample:
    def test_counts_balance(self, tmp_path, capsys):
        path = tmp_path / "d.csv"
        write_csv(make_synthetic(990, 10, 4, 2.0, 0), path)
        out = tmp_path / "o"
        code = main(["resample", "--input", str(path), "--schema", "generic", "--sampler", "smote_kmeans",
                     "--seed", "3", "--out", str(out)])
        assert code == 0
        counts = dict(kv.split("=") for kv in capsys.readouterr().out.split())
        counts = {k: int(v) for k, v in counts.items()}
        assert counts["original"] + counts["syn1"] + counts["syn2"] == 1980
        res = load_csv(out / "resampled.csv", "generic")
        assert res.n_fraud == 990 and res.n_rows == 1980

    def test_none_is_identity(self, kaggle_csv, tmp_path):
        out = tmp_path / "o"
        assert main(["resample", "--input", str(kaggle_csv), "--sampler", "none", "--out", str(out)]) == 0
        got = load_csv(out / "resampled.csv")
        want = load_csv(kaggle_csv)
        np.testing.assert_array_equal(got.features, want.features)
        np.testing.assert_array_equal(got.labels, want.labels)
        header = (out / "resampled.csv").read_text().splitlines()[0]
        assert header.endswith(",origin")

    def test_same_seed_same_bytes(self, kaggle_csv, tmp_path):
        for d in ("a", "b"):
            assert main(["resample", "--input", str(kaggle_csv), "--seed", "7", "--out", str(tmp_path / d)]) == 0
        assert (tmp_path / "a/resampled.csv").read_bytes() == (tmp_path / "b/resampled.csv").read_bytes()

    def test_originals_written_verbatim(self, kaggle_csv, tmp_path):
        out = tmp_path / "o"
        assert main(["resample", "--input", str(kaggle_csv), "--out", str(out)]) == 0
        got = load_csv(out / "resampled.csv")
        want = load_csv(kaggle_csv)
        np.testing.assert_array_equal(got.features[:want.n_rows], want.features)

    def test_underflow_exit_3(self, tmp_path):
        path = tmp_path / "d.csv"
        write_csv(make_synthetic(30, 1, 3, 1.0, 0), path)
        assert main(["resample", "--input", str(path), "--schema", "generic", "--out", str(tmp_path / "o")]) == 3
        assert not (tmp_path / "o" / "resampled.csv").exists()


class TestTrainEvaluate:
    def test_evaluate_outputs(self, kaggle_csv, tmp_path):
        out = tmp_path / "o"
        cfg = write_config(tmp_path / "c.json", input=str(kaggle_csv), model=FAST_ENSEMBLE, folds=3, out=str(out))
        assert main(["evaluate", "--config", str(cfg)]) == 0
        for name in ("metrics.csv", "roc.tsv", "table.md", "manifest.json"):
            assert (out / name).exists()
        roc = (out / "roc.tsv").read_text().splitlines()
        assert roc[0] == "fpr\ttpr" and roc[1] == "0.0\t0.0" and roc[-1] == "1.0\t1.0"
        man = json.loads((out / "manifest.json").read_text())
        assert man["seed"] == 0 and len(man["input_sha256"]) == 64 and man["tool_version"]

    def test_rerun_identical(self, kaggle_csv, tmp_path):
        cfg = write_config(tmp_path / "c.json", input=str(kaggle_csv), sampler="smote",
                           model={"kind": "random_forest", "hyperparameters": {"n_trees": 5}}, folds=3)
        for d in ("a", "b"):
            assert main(["evaluate", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
        names = ["metrics.csv", "roc.tsv", "table.md", "manifest.json"]
        assert read_bytes(tmp_path / "a", names[:3]) == read_bytes(tmp_path / "b", names[:3])

    def test_seed_precedence(self, kaggle_csv, tmp_path, monkeypatch):
        cfg = write_config(tmp_path / "c.json", input=str(kaggle_csv), seed=1, folds=2,
                           model={"kind": "logistic", "hyperparameters": {"epochs": 1}})
        monkeypatch.setenv("IMBF_SEED", "5")
        assert main(["evaluate", "--config", str(cfg), "--out", str(tmp_path / "env")]) == 0
        assert json.loads((tmp_path / "env/manifest.json").read_text())["seed"] == 5
        assert main(["evaluate", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path / "flag")]) == 0
        assert json.loads((tmp_path / "flag/manifest.json").read_text())["seed"] == 9

    def test_bad_key(self, kaggle_csv, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", input=str(kaggle_csv), smaple="smote")
        assert main(["evaluate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "smaple" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_missing_version(self, kaggle_csv, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"input": str(kaggle_csv)}))
        assert main(["evaluate", "--config", str(tmp_path / "c.json")]) == 2

    def test_train_ensemble_and_reload(self, kaggle_csv, tmp_path):
        from imbf.cli import load_trained

        out = tmp_path / "o"
        cfg = write_config(tmp_path / "c.json", input=str(kaggle_csv), model=FAST_ENSEMBLE, out=str(out))
        assert main(["train", "--config", str(cfg)]) == 0
        scaler, model = load_trained(out / "model.json")
        ds = load_csv(kaggle_csv)
        s = model.predict_proba(scaler.transform(ds.features))
        assert s.shape == (ds.n_rows,) and np.all((s >= 0) & (s <= 1))

    def test_train_single_model(self, kaggle_csv, tmp_path):
        from imbf.cli import load_trained

        out = tmp_path / "o"
        cfg = write_config(tmp_path / "c.json", input=str(kaggle_csv), out=str(out),
                           model={"kind": "decision_tree", "hyperparameters": {"max_depth": 3}})
        assert main(["train", "--config", str(cfg)]) == 0
        _, model = load_trained(out / "model.json")
        assert model.kind == "decision_tree"

    def test_training_error_leaves_no_outputs(self, tmp_path):
        path = tmp_path / "d.csv"
        write_csv(make_synthetic(40, 1, 3, 1.0, 0), path)
        cfg = write_config(tmp_path / "c.json", input=str(path), schema="generic", out=str(tmp_path / "o"),
                           model={"kind": "logistic"})
        assert main(["evaluate", "--config", str(cfg)]) == 3
        out = tmp_path / "o"
        assert not out.exists() or not any(out.iterdir())


class TestCompare:
    def matrix(self, tmp_path, csv, **kw):
        base = {
            "input": str(csv),
            "samplers": ["none", "smote", "smote_kmeans"],
            "classifiers": {
                "DT": {"kind": "decision_tree", "hyperparameters": {"max_depth": 3}},
                "RF": {"kind": "random_forest", "hyperparameters": {"n_trees": 5}},
                "SVM": {"kind": "linear_svm", "hyperparameters": {"epochs": 3}},
                "Ours": FAST_ENSEMBLE,
            },
            "folds": 3,
        }
        return write_config(tmp_path / "m.json", **{**base, **kw})

    def test_grid(self, kaggle_csv, tmp_path):
        out = tmp_path / "o"
        m = self.matrix(tmp_path, kaggle_csv)
        assert main(["compare", "--config-matrix", str(m), "--out", str(out)]) == 0
        md = (out / "table.md").read_text().splitlines()
        assert md[0] == "| Method | None | Smote | Smote-Kmeans |"
        assert [row.split("|")[1].strip() for row in md[2:]] == ["DT", "RF", "SVM", "Ours"]
        grid = (out / "grid.csv").read_text().splitlines()
        assert len(grid) == 5 and all(len(r.split(",")) == 4 for r in grid)
        first = read_bytes(out, ["table.md", "grid.csv"])
        assert main(["compare", "--config-matrix", str(m), "--out", str(tmp_path / "again")]) == 0
        assert read_bytes(tmp_path / "again", ["table.md", "grid.csv"]) == first

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_failed_cell(self, kaggle_csv, tmp_path):
        out = tmp_path / "o"
        m = self.matrix(tmp_path, kaggle_csv, samplers=["smote"],
                        classifiers={"DT": {"kind": "decision_tree"},
                                     "BAD": {"kind": "logistic", "hyperparameters": {"lr": 1e300}}})
        assert main(["compare", "--config-matrix", str(m), "--out", str(out)]) == 1
        md = (out / "table.md").read_text()
        assert "| BAD | FAILED |" in md and "| DT | " in md
        assert json.loads((out / "manifest.json").read_text())["failed_cells"] == ["BAD/smote"]


def test_staged_outputs_discarded_on_failure(tmp_path):
    from imbf.cli import staged_outputs

    out = tmp_path / "o"
    out.mkdir()
    (out / "metrics.csv").write_text("old\n")
    with pytest.raises(RuntimeError):
        with staged_outputs(out) as stage:
            (stage / "metrics.csv").write_text("new\n")
            raise RuntimeError("boom")
    assert sorted(p.name for p in out.iterdir()) == ["metrics.csv"]
    assert (out / "metrics.csv").read_text() == "old\n"
