"""Command-line entry point: ``imbf {inspect,resample,train,evaluate,compare}``.

Exit codes: 0 success, 1 partial comparison failure, 2 input/config error,
3 runtime training error. Every command writes a manifest.json recording the
config, the seed, and a hash of the input, which is enough to rerun it and
get byte-identical outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    ORIGIN_COLUMN,
    Dataset,
    inspect,
    load_csv,
    resolve_missing,
    standardize_fit_transform,
    subsample_majority,
    write_csv,
)
from .ensemble import EnsembleSpec, StackedEnsemble
from .errors import ConfigError, InputError, TrainingError
from .evaluation import SAMPLERS, crossval_evaluate, fit_model
from .learners import ClassifierSpec
from .resampling import ResamplePlan, resample
from .seeding import derive_seed

log = logging.getLogger("imbf")

CONFIG_VERSION = 1
SEED_ENV = "IMBF_SEED"
EXIT_OK, EXIT_PARTIAL, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2, 3


# ----------------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    input: str = ""
    schema: str = "kaggle_creditcard"
    sampler: str = "smote_kmeans"
    sampler_params: dict = field(default_factory=dict)
    model: dict = field(default_factory=lambda: {"kind": "ensemble"})
    folds: int = 10
    seed: int = 0
    max_majority: int | None = 50000
    missing: str = "reject"
    out: str = "out"
    jobs: int = 1
    version: int = CONFIG_VERSION

    def validate(self) -> None:
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {self.version!r}")
        if not self.input:
            raise ConfigError("config needs an 'input' path")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"sampler must be one of {SAMPLERS}, got {self.sampler!r}")
        if self.missing not in ("reject", "drop", "impute"):
            raise ConfigError(f"missing must be reject, drop or impute, got {self.missing!r}")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        self.plan()
        self.model_spec()

    def plan(self) -> ResamplePlan:
        return ResamplePlan.from_dict(self.sampler_params, seed=derive_seed(self.seed, "sampler"))

    def model_spec(self):
        return parse_model_spec(self.model, derive_seed(self.seed, "model"))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class CompareConfig:
    input: str = ""
    schema: str = "kaggle_creditcard"
    samplers: list = field(default_factory=lambda: ["smote", "smote_kmeans"])
    sampler_params: dict = field(default_factory=dict)
    classifiers: dict = field(default_factory=lambda: dict(TABLE_ROWS))
    folds: int = 10
    seed: int = 0
    max_majority: int | None = 50000
    missing: str = "reject"
    out: str = "out"
    jobs: int = 1
    version: int = CONFIG_VERSION

    def validate(self) -> None:
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {self.version!r}")
        if not self.input:
            raise ConfigError("config needs an 'input' path")
        for s in self.samplers:
            if s not in SAMPLERS:
                raise ConfigError(f"unknown sampler {s!r} in samplers")
        ResamplePlan.from_dict(self.sampler_params)
        for spec in self.classifiers.values():
            parse_model_spec(spec, 0)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# rows of the comparison grid, in table order
TABLE_ROWS = {
    "DT": {"kind": "decision_tree"},
    "RF": {"kind": "random_forest"},
    "SVM": {"kind": "linear_svm"},
    "Ours": {"kind": "ensemble"},
}
SAMPLER_TITLES = {"none": "None", "smote": "Smote", "smote_kmeans": "Smote-Kmeans"}


def parse_model_spec(d: dict, seed: int):
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError("model spec must be an object with a 'kind'")
    if d["kind"] == "ensemble":
        return EnsembleSpec.from_dict(d, seed=seed)
    return ClassifierSpec.from_dict(d, seed=seed)


def _build_config(cls, raw: dict):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    if "version" not in raw:
        raise ConfigError("config is missing the required 'version' field")
    return cls(**raw)


def load_config(path, cls=ExperimentConfig):
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return _build_config(cls, raw)


def apply_overrides(cfg, args) -> None:
    """Flags beat the IMBF_SEED environment variable, which beats the config file."""
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            cfg.seed = int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from None
    for name in ("input", "schema", "sampler", "seed", "folds", "out", "jobs"):
        val = getattr(args, name, None)
        if val is not None and hasattr(cfg, name):
            setattr(cfg, name, val)


# ---------------------------------------------------------------------- outputs


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@contextmanager
def staged_outputs(out_dir):
    """Yield a staging directory whose contents replace files in ``out_dir`` only on success."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
    try:
        yield stage
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    for item in sorted(stage.iterdir()):
        target = out / item.name
        if target.is_dir():
            shutil.rmtree(target)
        elif target.exists():
            target.unlink()
        item.rename(target)
    stage.rmdir()


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def manifest(command: str, config: dict, seed: int, input_path, extra=None) -> dict:
    m = {
        "tool": "imbf",
        "tool_version": __version__,
        "command": command,
        "config": config,
        "seed": seed,
        "input": str(input_path),
        "input_sha256": file_sha256(input_path),
    }
    m.update(extra or {})
    return m


def prepare(input_path, schema, missing, max_majority, seed) -> tuple:
    ds = load_csv(input_path, schema)
    ds = resolve_missing(ds, missing)
    full = ds.n_rows
    ds = subsample_majority(ds, max_majority, derive_seed(seed, "subsample"))
    info = {"rows_loaded": full, "rows_used": ds.n_rows, "fraud_rows": ds.n_fraud,
            "max_majority": max_majority, "subsample_seed": derive_seed(seed, "subsample")}
    return ds, info


# --------------------------------------------------------------------- commands


def load_trained(path):
    """Read a model.json written by ``train``: (standardizer, model)."""
    from .data import Standardizer
    from .learners import model_from_dict

    d = json.loads(Path(path).read_text())
    scaler = Standardizer.from_dict(d["standardizer"])
    if d.get("kind") == "stacked_ensemble":
        return scaler, StackedEnsemble.load(path)
    return scaler, model_from_dict(d["model"])


def cmd_inspect(args) -> int:
    ds = load_csv(args.input, args.schema)
    report = inspect(ds)
    out = Path(args.out or ".")
    with staged_outputs(out) as stage:
        write_json(stage / "inspection.json", report.to_dict())
        write_json(stage / "manifest.json", manifest("inspect", {"schema": args.schema}, None, args.input))
    print(report.summary())
    for col, n in report.missing_per_column.items():
        if n:
            print(f"missing {col}: {n}")
    return EXIT_OK


def cmd_resample(args) -> int:
    cfg = load_config(args.config) if args.config else ExperimentConfig(version=CONFIG_VERSION)
    apply_overrides(cfg, args)
    if args.missing:
        cfg.missing = args.missing
    cfg.validate()
    ds = resolve_missing(load_csv(cfg.input, cfg.schema), cfg.missing)
    # resampling runs in standardized space; synthetic rows are mapped back to input units
    scaler, train_s, _ = standardize_fit_transform(ds)
    res = resample(train_s, cfg.sampler, cfg.plan())
    synth = scaler.inverse_transform(res.dataset.features[ds.n_rows:])
    out_ds = Dataset(np.vstack([ds.features, synth]), res.dataset.labels,
                     ds.feature_names, res.dataset.row_ids)
    counts = res.counts()
    with staged_outputs(cfg.out) as stage:
        write_csv(out_ds, stage / "resampled.csv", {ORIGIN_COLUMN: res.origin_column()})
        write_json(stage / "manifest.json", manifest("resample", cfg.to_dict(), cfg.seed, cfg.input,
                                                     {"counts": counts}))
    print(" ".join(f"{k}={v}" for k, v in counts.items()))
    return EXIT_OK


def _experiment_config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required")
    cfg = load_config(args.config)
    apply_overrides(cfg, args)
    cfg.validate()
    return cfg


def cmd_train(args) -> int:
    cfg = _experiment_config(args)
    ds, info = prepare(cfg.input, cfg.schema, cfg.missing, cfg.max_majority, cfg.seed)
    scaler, train_s, _ = standardize_fit_transform(ds)
    res = resample(train_s, cfg.sampler, cfg.plan())
    spec = cfg.model_spec()
    model = fit_model(spec, res.dataset)
    header = {"format_version": 1, "standardizer": scaler.to_dict(), "feature_names": list(ds.feature_names)}
    with staged_outputs(cfg.out) as stage:
        if isinstance(model, StackedEnsemble):
            model.save(stage, extra=header)
        else:
            write_json(stage / "model.json", {**header, "model": model.to_dict()})
        write_json(stage / "manifest.json", manifest("train", cfg.to_dict(), cfg.seed, cfg.input,
                                                     {"data": info, "sampler_counts": res.counts()}))
    print(f"trained {spec.to_dict()['kind']} on {res.dataset.n_rows} rows -> {Path(cfg.out) / 'model.json'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _experiment_config(args)
    ds, info = prepare(cfg.input, cfg.schema, cfg.missing, cfg.max_majority, cfg.seed)
    report = crossval_evaluate(ds, cfg.sampler, cfg.model_spec(), k=cfg.folds, seed=cfg.seed,
                               plan=cfg.plan(), jobs=cfg.jobs)
    with staged_outputs(cfg.out) as stage:
        (stage / "metrics.csv").write_text(report.metrics_csv())
        (stage / "roc.tsv").write_text(report.roc_tsv())
        (stage / "table.md").write_text(report.markdown_table())
        write_json(stage / "report.json", report.to_dict())
        write_json(stage / "manifest.json", manifest("evaluate", cfg.to_dict(), cfg.seed, cfg.input, {"data": info}))
    agg = report.aggregate()
    print(f"accuracy={agg['accuracy']:.4f} recall={agg['recall']:.4f} auc={agg['auc']:.4f}")
    return EXIT_OK


def compare_grid(cfg: CompareConfig, ds: Dataset) -> dict:
    """AUC per (classifier row, sampler column); failed cells hold the exception.

    The seed is derived per classifier row, so every sampler column of a row
    is scored on the same outer folds with the same model seeds.
    """
    plan_params = cfg.sampler_params
    cells = {}
    for r, (name, spec_d) in enumerate(cfg.classifiers.items()):
        cell_seed = derive_seed(cfg.seed, "row", r)
        for sampler in cfg.samplers:
            try:
                spec = parse_model_spec(spec_d, cell_seed)
                plan = ResamplePlan.from_dict(plan_params, seed=cell_seed)
                rep = crossval_evaluate(ds, sampler, spec, k=cfg.folds, seed=cell_seed, plan=plan, jobs=cfg.jobs)
                cells[name, sampler] = rep.aggregate()["auc"]
            except Exception as e:  # noqa: BLE001 - a failed cell must not stop the grid
                log.error("cell %s/%s failed: %s", name, sampler, e)
                cells[name, sampler] = e
    return cells


def render_grid(cfg: CompareConfig, cells) -> tuple:
    titles = [SAMPLER_TITLES[s] for s in cfg.samplers]
    md = ["| Method | " + " | ".join(titles) + " |", "|---" * (len(titles) + 1) + "|"]
    csv = ["method," + ",".join(cfg.samplers)]
    for name in cfg.classifiers:
        vals = [cells[name, s] for s in cfg.samplers]
        md.append(f"| {name} | " + " | ".join("FAILED" if isinstance(v, Exception) else f"{v:.2f}" for v in vals) + " |")
        csv.append(name + "," + ",".join("FAILED" if isinstance(v, Exception) else f"{v:.6f}" for v in vals))
    return "\n".join(md) + "\n", "\n".join(csv) + "\n"


def cmd_compare(args) -> int:
    if not args.config_matrix:
        raise ConfigError("--config-matrix is required")
    cfg = load_config(args.config_matrix, CompareConfig)
    apply_overrides(cfg, args)
    cfg.validate()
    ds, info = prepare(cfg.input, cfg.schema, cfg.missing, cfg.max_majority, cfg.seed)
    cells = compare_grid(cfg, ds)
    md, csv = render_grid(cfg, cells)
    failed = sorted(f"{n}/{s}" for (n, s), v in cells.items() if isinstance(v, Exception))
    with staged_outputs(cfg.out) as stage:
        (stage / "table.md").write_text(md)
        (stage / "grid.csv").write_text(csv)
        write_json(stage / "manifest.json", manifest("compare", cfg.to_dict(), cfg.seed, cfg.input,
                                                     {"data": info, "failed_cells": failed}))
    print(md, end="")
    return EXIT_PARTIAL if failed else EXIT_OK


# ------------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="imbf", description="Imbalanced fraud-detection experiments.")
    p.add_argument("--version", action="version", version=f"imbf {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        sp.add_argument("--input")
        sp.add_argument("--schema", choices=["kaggle_creditcard", "generic"])
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        if config:
            sp.add_argument("--config")
            sp.add_argument("--folds", type=int)
            sp.add_argument("--jobs", type=int)

    sp = sub.add_parser("inspect", help="class balance, missing values, column stats")
    common(sp, config=False)
    sp.set_defaults(func=cmd_inspect)

    sp = sub.add_parser("resample", help="write a resampled CSV with an origin column")
    common(sp)
    sp.add_argument("--sampler", choices=SAMPLERS)
    sp.add_argument("--missing", choices=["reject", "drop", "impute"])
    sp.set_defaults(func=cmd_resample)

    for name, func, text in (("train", cmd_train, "fit one model on the whole (resampled) dataset"),
                             ("evaluate", cmd_evaluate, "stratified k-fold evaluation")):
        sp = sub.add_parser(name, help=text)
        common(sp)
        sp.add_argument("--sampler", choices=SAMPLERS)
        sp.set_defaults(func=func)

    sp = sub.add_parser("compare", help="AUC grid over samplers x classifiers")
    common(sp, config=False)
    sp.add_argument("--config-matrix", dest="config_matrix")
    sp.add_argument("--folds", type=int)
    sp.add_argument("--jobs", type=int)
    sp.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "inspect":
        if not args.input:
            parser.error("inspect needs --input")
        args.schema = args.schema or "kaggle_creditcard"
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except TrainingError as e:
        print(f"training error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:  # noqa: BLE001 - anything else is still a failed run, not a crash
        log.debug("unexpected failure", exc_info=True)
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
