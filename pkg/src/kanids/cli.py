"""Command-line front end.

Subcommands: ``prepare`` (CSV -> preprocessed split cache), ``run`` (train a
model grid from a YAML config and emit all reports), ``gradcheck`` (print
the finite-difference table), ``report`` (re-emit tables from stored run
records).

Exit codes: 0 success, 1 usage/config error or failed gradcheck, 2 data
error, 3 divergence (grid still completes).  A run is fully determined by
its config file plus flags; the only environment influence is KANIDS_JOBS
overriding the worker count for grid execution.  Every deterministic output
file (records, summary.json, plot-data CSVs) is byte-identical across
reruns of the same config; wall-clock timings live only in the human-facing
table, the per-run documents and timings.json.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from kanids import data as dp
from kanids.gradcheck import run_suite, summarize
from kanids.models import MODEL_KINDS, ModelSpec, build
from kanids.report import Confusion, RunReport, emit_results
from kanids.train import DivergenceError, TrainConfig, train_model

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGENCE = 3


class ConfigError(ValueError):
    pass


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# experiment config


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    cache_dir: Path
    models: tuple[str, ...]
    train: TrainConfig
    output_dir: Path
    subsample_train: int | None = None
    subsample_test: int | None = None
    subsample_seed: int = 42
    jobs: int = 1
    hidden_width: int = 64
    cnn_channels: tuple[int, int, int] = (16, 32, 32)
    grid_size: int = 5
    degree: int = 3
    notes: tuple[str, ...] = ()


def load_experiment_config(path, overrides: dict) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config parse error: top level must be a mapping")

    dataset = doc.get("dataset", {})
    if not isinstance(dataset, dict) or "name" not in dataset:
        raise ConfigError("config parse error: dataset.name is required")
    cache_dir = dataset.get("cache_dir")
    if cache_dir is None:
        raise ConfigError("config parse error: dataset.cache_dir is required")

    models = overrides.get("models") or doc.get("models") or []
    if isinstance(models, str):
        models = [m.strip() for m in models.split(",") if m.strip()]
    if not models:
        raise ConfigError("config parse error: empty model list")
    seen = set()
    for kind in models:
        if kind not in MODEL_KINDS:
            raise ConfigError(f"config parse error: unknown model {kind!r}")
        if kind in seen:
            raise ConfigError(f"config parse error: duplicate model {kind!r}")
        seen.add(kind)

    train_doc = dict(doc.get("train") or {})
    for key, flag in (("learning_rate", "lr"), ("epochs", "epochs"),
                      ("seed", "seed"), ("batch_size", "batch_size")):
        if overrides.get(flag) is not None:
            train_doc[key] = overrides[flag]
    try:
        train = TrainConfig(**train_doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config parse error: bad train section: {exc}") from exc

    sub = dict(doc.get("subsample") or {})
    if overrides.get("subsample_train") is not None:
        sub["train_rows"] = overrides["subsample_train"]
    if overrides.get("subsample_test") is not None:
        sub["test_rows"] = overrides["subsample_test"]

    params = dict(doc.get("model_params") or {})
    output_dir = overrides.get("output_dir") or doc.get("output_dir")
    if output_dir is None:
        raise ConfigError("config parse error: output_dir is required")
    jobs = overrides.get("jobs") or doc.get("jobs") or 1

    notes = doc.get("notes") or []
    if not isinstance(notes, list):
        raise ConfigError("config parse error: notes must be a list")

    return ExperimentConfig(
        dataset=dataset["name"],
        cache_dir=Path(cache_dir),
        models=tuple(models),
        train=train,
        output_dir=Path(output_dir),
        subsample_train=sub.get("train_rows"),
        subsample_test=sub.get("test_rows"),
        subsample_seed=sub.get("seed", 42),
        jobs=int(jobs),
        hidden_width=int(params.get("hidden_width", 64)),
        cnn_channels=tuple(params.get("cnn_channels", (16, 32, 32))),
        grid_size=int(params.get("grid_size", 5)),
        degree=int(params.get("degree", 3)),
        notes=tuple(str(n) for n in notes),
    )


# ---------------------------------------------------------------------------
# prepare


def prepare_dataset(dataset: str, paths: dict, out_dir: Path, seed: int,
                    test_fraction: float = 0.2,
                    tri_target_rows: int = 60_000) -> dict:
    """Ingest, preprocess and cache one dataset; returns the ingest report."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if dataset == "tri_ids":
        tables = {}
        for name in ("bot_iot", "nsl_kdd", "cicids2017"):
            csv = paths.get(name)
            if csv is None:
                raise ConfigError(f"tri_ids prepare needs --{name.replace('_', '-')}-csv")
            tables[name] = dp.ingest_csv(csv, dp.SCHEMAS[name])
        raw = dp.build_tri_ids(tables["bot_iot"], tables["nsl_kdd"],
                               tables["cicids2017"],
                               target_rows=tri_target_rows, seed=seed)
        train, test = dp.preprocess(raw, seed)
        stats = {"sources": {k: t.ingest_stats for k, t in tables.items()},
                 "merge": raw.ingest_stats}
    else:
        schema = dp.SCHEMAS[dataset]
        raw = dp.ingest_csv(paths["train"], schema)
        test_raw = None
        if paths.get("test"):
            test_raw = dp.ingest_csv(paths["test"], schema)
        train, test = dp.preprocess(raw, seed, test_raw=test_raw,
                                    test_fraction=test_fraction)
        stats = {"train": raw.ingest_stats}
        if test_raw is not None:
            stats["test"] = test_raw.ingest_stats

    train_path = out_dir / "train.split"
    reused = False
    if train_path.exists():
        try:
            reused = dp.load_split(train_path).fingerprint == train.fingerprint
        except ValueError:
            reused = False
    if not reused:
        dp.save_split(train, train_path)
        dp.save_split(test, out_dir / "test.split")

    report = {
        "dataset": train.name,
        "fingerprint": train.fingerprint,
        "processed_dim": train.features.shape[1],
        "train_rows": int(train.features.shape[0]),
        "test_rows": int(test.features.shape[0]),
        "train_attack_fraction": float(train.labels.mean()),
        "test_attack_fraction": float(test.labels.mean()),
        "feature_names": list(train.feature_names or ()),
        "cache_reused": reused,
        "ingest": stats,
    }
    (out_dir / "ingest_report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def cmd_prepare(args) -> int:
    paths = {"train": args.train_csv, "test": args.test_csv,
             "bot_iot": args.bot_iot_csv, "nsl_kdd": args.nsl_kdd_csv,
             "cicids2017": args.cicids_csv}
    report = prepare_dataset(args.dataset, paths, Path(args.out), args.seed,
                             args.test_fraction, args.tri_target_rows)
    _say(f"prepared {report['dataset']}: {report['train_rows']} train / "
         f"{report['test_rows']} test rows, {report['processed_dim']} features"
         + (" (cache reused)" if report["cache_reused"] else ""))
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# run


def _diverged_report(name: str, dataset: str, config: TrainConfig,
                     param_count: int, reason: str) -> RunReport:
    from dataclasses import asdict
    zeros = {k: 0.0 for k in ("accuracy", "precision", "recall", "f1",
                              "macro_precision", "macro_recall", "macro_f1")}
    return RunReport(model_name=name, dataset=dataset, config=asdict(config),
                     param_count=param_count, epoch_losses=[],
                     confusion=Confusion(), metrics=zeros, diverged=True,
                     notes=[f"diverged: {reason}"])


def run_experiment(cfg: ExperimentConfig) -> tuple[list[RunReport], list[Path]]:
    """Train every model in the grid and emit all output files."""
    train_split = dp.load_split(cfg.cache_dir / "train.split")
    test_split = dp.load_split(cfg.cache_dir / "test.split")
    if cfg.subsample_train:
        train_split = dp.subsample_split(train_split, cfg.subsample_train,
                                         cfg.subsample_seed)
    if cfg.subsample_test:
        test_split = dp.subsample_split(test_split, cfg.subsample_test,
                                        cfg.subsample_seed)
    input_dim = train_split.features.shape[1]
    notes = list(cfg.notes)
    if cfg.train.learning_rate != TrainConfig().learning_rate:
        notes.append(
            f"learning_rate override: {cfg.train.learning_rate!r} "
            f"(paper-fidelity default is {TrainConfig().learning_rate!r})")

    def one(kind: str) -> RunReport:
        spec = ModelSpec(kind, input_dim=input_dim,
                         hidden_width=cfg.hidden_width,
                         cnn_channels=cfg.cnn_channels,
                         grid_size=cfg.grid_size, degree=cfg.degree,
                         seed=cfg.train.seed)
        model = build(spec)
        _say(f"training {kind} ({model.param_count()} params) "
             f"on {train_split.name}")
        try:
            report = train_model(model, train_split, test_split, cfg.train,
                                 notes=notes)
        except DivergenceError as exc:
            _say(f"  {kind} diverged: {exc}")
            return _diverged_report(kind, train_split.name, cfg.train,
                                    model.param_count(), str(exc))
        _say(f"  {kind}: acc={report.metrics['accuracy']:.4f} "
             f"f1={report.metrics['f1']:.4f} ({report.wall_time_s:.1f}s)")
        return report

    jobs = int(__import__("os").environ.get("KANIDS_JOBS", cfg.jobs))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(one, cfg.models))
    else:
        reports = [one(kind) for kind in cfg.models]

    out_dir = cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    written = emit_results(reports, out_dir)

    records_dir = out_dir / "records"
    records_dir.mkdir(exist_ok=True)
    for r in reports:
        rec = records_dir / f"{r.dataset}_{r.model_name}.json"
        rec.write_text(json.dumps(r.to_record(), indent=2, sort_keys=True) + "\n")
        written.append(rec)
    timings = {r.run_id: r.wall_time_s for r in reports}
    (out_dir / "timings.json").write_text(
        json.dumps(timings, indent=2, sort_keys=True) + "\n")

    manifest = {
        "dataset": train_split.name,
        "fingerprint": train_split.fingerprint,
        "models": list(cfg.models),
        "deterministic_files": sorted(
            str(p.relative_to(out_dir)) for p in written
            if p.suffix in (".csv", ".json")),
        "files": sorted(str(p.relative_to(out_dir)) for p in written
                        + [out_dir / "timings.json"]),
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return reports, written


def cmd_run(args) -> int:
    overrides = {
        "models": args.models,
        "lr": args.lr,
        "epochs": args.epochs,
        "seed": args.seed,
        "batch_size": None,
        "output_dir": args.output_dir,
        "jobs": args.jobs,
        "subsample_train": args.subsample_train,
        "subsample_test": args.subsample_test,
    }
    cfg = load_experiment_config(args.config, overrides)
    reports, _ = run_experiment(cfg)
    print((cfg.output_dir / "results_table.txt").read_text(), end="")
    if any(r.diverged for r in reports):
        return EXIT_DIVERGENCE
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck / report


def cmd_gradcheck(args) -> int:
    started = time.perf_counter()
    results = run_suite(seeds=args.seeds, tolerance=args.tolerance)
    worst = summarize(results)
    ok = True
    print(f"{'layer':<16} {'max rel err':>12}  status")
    for name, err in worst.items():
        passed = err < args.tolerance
        ok = ok and passed
        print(f"{name:<16} {err:>12.3e}  {'pass' if passed else 'FAIL'}")
    elapsed = time.perf_counter() - started
    print(f"{len(results)} checks in {elapsed:.1f}s, tolerance {args.tolerance:g}")
    return EXIT_OK if ok else EXIT_USAGE


def cmd_report(args) -> int:
    records_dir = Path(args.runs)
    if not records_dir.exists():
        raise FileNotFoundError(f"missing file: {records_dir}")
    reports = []
    for path in sorted(records_dir.glob("*.json")):
        rec = json.loads(path.read_text())
        conf = rec["confusion"]
        reports.append(RunReport(
            model_name=rec["model"], dataset=rec["dataset"],
            config=rec["config"], param_count=rec["param_count"],
            epoch_losses=rec["epoch_losses"],
            confusion=Confusion(conf["tp"], conf["tn"], conf["fp"], conf["fn"]),
            metrics=rec["metrics"], diverged=rec["diverged"],
            notes=rec["notes"]))
    if not reports:
        raise ConfigError(f"no run records found under {records_dir}")
    emit_results(reports, Path(args.out))
    print((Path(args.out) / "results_table.txt").read_text(), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kanids",
        description="Spline-network intrusion-detection benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="ingest CSVs and cache preprocessed splits")
    p.add_argument("--dataset", required=True,
                   choices=sorted(dp.SCHEMAS) + ["tri_ids"])
    p.add_argument("--train-csv", help="raw training CSV (non tri_ids)")
    p.add_argument("--test-csv", help="official test CSV (else stratified split)")
    p.add_argument("--bot-iot-csv", help="BOT-IoT CSV for tri_ids")
    p.add_argument("--nsl-kdd-csv", help="NSL-KDD CSV for tri_ids")
    p.add_argument("--cicids-csv", help="CICIDS2017 CSV for tri_ids")
    p.add_argument("--out", required=True, help="cache directory")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--tri-target-rows", type=int, default=60_000)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("run", help="train a model grid from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--models", help="comma-separated override of the model list")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--output-dir")
    p.add_argument("--subsample-train", type=int)
    p.add_argument("--subsample-test", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", help="re-emit result tables from run records")
    p.add_argument("--runs", required=True, help="records directory of a run")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        _say(f"config error: {exc}")
        return EXIT_USAGE
    except (FileNotFoundError, ValueError) as exc:
        _say(f"data error: {exc}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
