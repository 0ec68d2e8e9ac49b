"""Command-line front end: synth, clusters, train, benchmark, importance.

Exit codes: 0 success, 2 validation error, 3 runtime/training error.
Errors go to stderr as one JSON object per failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import dataset as ds_mod
from .benchmark import BenchmarkConfig, BenchmarkError, run_benchmark
from .clustering import (
    ClusteringError,
    attach_counts,
    load_plan,
    signature_clusters,
    validate_plan,
)
from .dataset import DatasetError
from .evaluation import EvaluationError, auc, importance_report
from .models import (
    GapNetModel,
    TrainConfig,
    TrainingError,
    load_model,
    predict,
    predict_subnet,
    save_model,
    train_gapnet,
    train_vanilla,
)
from .numerics import NumericsError
from .synth import GapPattern, MadelonConfig, SynthError, generate_madelon, inject_gaps, paper_gap_pattern

VALIDATION_ERRORS = (
    DatasetError,
    ClusteringError,
    SynthError,
    EvaluationError,
    ValueError,
)
RUNTIME_ERRORS = (TrainingError, BenchmarkError, NumericsError, RuntimeError, OSError)


def _fail(kind, message):
    print(json.dumps({"error": kind, "message": str(message)}), file=sys.stderr)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def _write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, sort_keys=True, indent=1)
        fh.write("\n")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _config_hash(config):
    blob = json.dumps(_jsonable(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _out_dir(arg):
    base = arg or os.environ.get("GAPNET_OUT", ".")
    path = Path(base)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_dataset(args):
    return ds_mod.load_csv(
        args.dataset, missing_token=args.missing_token, label_column=args.label_column
    )


def _resolve_plan(args, ds):
    if getattr(args, "plan", None):
        plan = load_plan(args.plan, ds.feature_names)
        attach_counts(plan, ds)
        report = validate_plan(plan, ds)
        if not report.valid:
            raise ClusteringError(
                f"plan validation failed: overlaps={report.overlaps} "
                f"empty_support={report.empty_support}"
            )
        return plan
    return signature_clusters(ds)


def _add_dataset_args(p):
    p.add_argument("dataset", help="CSV file with a header row and a label column")
    p.add_argument("--missing-token", default="NA")
    p.add_argument("--label-column", default="label")


def _add_train_args(p):
    p.add_argument("--plan", help="JSON plan file: cluster name -> feature names")
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--hidden-multiplier", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--no-stratify", action="store_true")
    p.add_argument(
        "--unfreeze-bodies",
        action="store_true",
        help="fine-tune sub-network bodies during stage II instead of freezing them",
    )


def cmd_synth(args):
    cfg = MadelonConfig(
        n_samples=args.n_samples,
        class_separation=args.class_separation,
        clusters_per_class=args.clusters_per_class,
        seed=args.seed,
    )
    ds = generate_madelon(cfg)
    if not args.no_gaps:
        pattern = paper_gap_pattern() if args.n_samples == 1000 else GapPattern()
        if pattern.blocks:
            ds = inject_gaps(ds, pattern)
    ds_mod.save_csv(ds, args.out)
    complete = ds.complete_rows()
    print(
        json.dumps(
            {
                "path": str(args.out),
                "n_samples": ds.n_samples,
                "n_features": ds.n_features,
                "complete_rows": int(complete.size),
                "missing_cells": int((~ds.present).sum()),
                "class_counts": [int((ds.labels == c).sum()) for c in (0, 1)],
            }
        )
    )
    return 0


def cmd_clusters(args):
    ds = _load_dataset(args)
    if args.plan:
        plan = load_plan(args.plan, ds.feature_names)
        attach_counts(plan, ds)
    else:
        plan = signature_clusters(ds)
    report = validate_plan(plan, ds)
    out = {
        "clusters": [
            {
                "name": c.name,
                "features": [ds.feature_names[j] for j in c.features],
                "complete_rows": report.counts[c.name],
            }
            for c in plan.clusters
        ],
        "uncovered_features": [ds.feature_names[j] for j in report.uncovered_features],
        "overlaps": [
            {"feature": ds.feature_names[j], "clusters": names}
            for j, names in report.overlaps
        ],
        "empty_support": report.empty_support,
        "valid": report.valid,
    }
    text = json.dumps(_jsonable(out), sort_keys=True, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    if args.plan and not report.valid:
        _fail("validation", "supplied plan is invalid for this dataset")
        return 2
    return 0


def _train_config(args):
    return TrainConfig(
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        dropout_rate=args.dropout,
        hidden_multiplier=args.hidden_multiplier,
        seed=args.seed,
        freeze_bodies=not args.unfreeze_bodies,
    )


def cmd_train(args):
    ds = _load_dataset(args)
    plan = _resolve_plan(args, ds)
    cfg = _train_config(args)
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 17]))
    split = ds_mod.split(ds, args.test_fraction, rng, stratified=not args.no_stratify)
    stats = None
    work = ds
    if not args.no_normalize:
        stats = ds_mod.compute_stats(ds, split.train_rows)
        work = ds_mod.normalize(ds, stats)
    out = _out_dir(args.out)
    report = {
        "config": vars(args).copy(),
        "version": __version__,
        "test_rows": split.test_rows.tolist(),
        "models": {},
    }
    report["config"].pop("func", None)
    test = split.test_rows
    labels = ds.labels[test]
    if args.model in ("vanilla", "both"):
        net = train_vanilla(work, split, cfg)
        path = out / "vanilla.model.json"
        save_model(net, path, feature_names=ds.feature_names, normalization=stats)
        report["models"]["vanilla"] = {
            "path": str(path),
            "test_auc": auc(predict(net, work, test), labels),
        }
    if args.model in ("gapnet", "both"):
        model, subnets = train_gapnet(work, plan, split, cfg)
        path = out / "gapnet.model.json"
        save_model(model, path, feature_names=ds.feature_names, normalization=stats)
        stage1 = {
            c.name: auc(predict_subnet(net, c, work, test), labels)
            for net, c in zip(subnets, plan.clusters)
        }
        report["models"]["gapnet"] = {
            "path": str(path),
            "test_auc": auc(predict(model, work, test), labels),
            "stage1_test_auc": stage1,
        }
    report_path = out / "train_report.json"
    _write_json(report, report_path)
    print(json.dumps({"report": str(report_path), **_jsonable(report["models"])}))
    return 0


def cmd_benchmark(args):
    ds = _load_dataset(args)
    plan = _resolve_plan(args, ds)
    cfg = BenchmarkConfig(
        runs=args.runs,
        test_fraction=args.test_fraction,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        dropout_rate=args.dropout,
        hidden_multiplier=args.hidden_multiplier,
        seed=args.seed,
        freeze_bodies=not args.unfreeze_bodies,
        normalize=not args.no_normalize,
        stratified=not args.no_stratify,
        jobs=args.jobs,
    )
    report = run_benchmark(ds, plan, cfg)
    out = _out_dir(args.out)
    config_snapshot = {
        "command": "benchmark",
        "dataset": str(args.dataset),
        "dataset_sha256": _sha256(args.dataset),
        "plan_file": args.plan,
        "benchmark": vars(cfg).copy(),
        "version": __version__,
    }
    # jobs only controls parallelism, never the results; keep it out of the
    # hash so identical configs hash identically regardless of worker count
    hashed = dict(config_snapshot, benchmark={
        k: v for k, v in config_snapshot["benchmark"].items() if k != "jobs"
    })
    report["config_hash"] = _config_hash(hashed)
    report["version"] = __version__
    manifest = {
        **config_snapshot,
        "per_run_seeds": [cfg.seed ^ i for i in range(cfg.runs)],
        "artifacts": {
            "report": str(out / "report.json"),
            "roc_csv": str(out / "roc.csv"),
            "histogram_csv": str(out / "histogram.csv"),
        },
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    _write_json(manifest, out / "manifest.json")
    _write_json(report, out / "report.json")
    with open(out / "roc.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "fpr", "mean_tpr", "std_tpr"])
        for name, entry in sorted(report["models"].items()):
            roc = entry["roc"]
            for f, m, s in zip(roc["fpr"], roc["mean_tpr"], roc["std_tpr"]):
                writer.writerow([name, repr(f), repr(m), repr(s)])
    with open(out / "histogram.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "bin_lo", "bin_hi", "count"])
        for name, entry in sorted(report["models"].items()):
            hist = entry["histogram"]
            for lo, hi, c in zip(hist["edges"], hist["edges"][1:], hist["counts"]):
                writer.writerow([name, repr(lo), repr(hi), c])
    summary = {
        "report": str(out / "report.json"),
        "gapnet_auc": f"{report['models']['gapnet']['auc_mean']:.3f}"
        f"±{report['models']['gapnet']['auc_std']:.3f}",
        "vanilla_auc": f"{report['models']['vanilla']['auc_mean']:.3f}"
        f"±{report['models']['vanilla']['auc_std']:.3f}",
        "delong_z": report["delong"]["pooled"]["z"],
        "delong_p": report["delong"]["pooled"]["p"],
    }
    print(json.dumps(summary))
    return 0


def cmd_importance(args):
    model, feature_names, stats = load_model(args.model)
    ds = _load_dataset(args)
    if feature_names is not None and feature_names != ds.feature_names:
        raise DatasetError("model feature names do not match the dataset header")
    work = ds_mod.normalize(ds, stats) if stats is not None else ds
    if isinstance(model, GapNetModel):
        feats = model.feature_indices
    else:
        feats = list(range(model.input_width))
    rows = work.complete_rows_for(feats)
    if rows.size == 0:
        raise DatasetError("no rows are complete for the model's features")
    Xc = work.dense_block(rows, feats)
    labels = work.labels[rows]

    def predict_rows(Xsub):
        if isinstance(model, GapNetModel):
            full = np.full((Xsub.shape[0], ds.n_features), np.nan)
            full[:, feats] = Xsub
            return model.predict(full)
        return model.forward(Xsub, mode="infer").outputs.reshape(-1)

    rng = np.random.default_rng(args.seed)
    report = importance_report(
        predict_rows,
        Xc,
        labels,
        [ds.feature_names[j] for j in feats],
        repeats=args.repeats,
        rng=rng,
    )
    order = np.argsort(report.ranks)
    out = {
        "repeats": args.repeats,
        "n_rows": int(rows.size),
        "warnings": report.warnings,
        "features": [
            {
                "name": report.feature_names[i],
                "mean_auc_drop": float(report.mean_drop[i]),
                "std_auc_drop": float(report.std_drop[i]),
                "rank": int(report.ranks[i]),
            }
            for i in order
        ],
        "top": [report.feature_names[i] for i in order[: args.top_k]],
    }
    text = json.dumps(_jsonable(out), sort_keys=True, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gapnet",
        description="Two-stage neural network training for incomplete tabular data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic benchmark dataset")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-samples", type=int, default=1000)
    p.add_argument(
        "--class-separation", type=float, default=MadelonConfig.class_separation
    )
    p.add_argument(
        "--clusters-per-class", type=int, default=MadelonConfig.clusters_per_class
    )
    p.add_argument("--no-gaps", action="store_true", help="skip the gap pattern")
    p.add_argument(
        "--paper-madelon",
        action="store_true",
        help="use the published benchmark configuration (these are the defaults)",
    )
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("clusters", help="detect or validate feature clusters")
    _add_dataset_args(p)
    p.add_argument("--plan", help="JSON plan file to validate instead of detecting")
    p.add_argument("--out", help="write the report here as well")
    p.set_defaults(func=cmd_clusters)

    p = sub.add_parser("train", help="train models on one split")
    _add_dataset_args(p)
    _add_train_args(p)
    p.add_argument("--model", choices=("vanilla", "gapnet", "both"), default="both")
    p.add_argument("--out", help="output directory (default $GAPNET_OUT or .)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("benchmark", help="repeated-resampling comparison")
    _add_dataset_args(p)
    _add_train_args(p)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="output directory (default $GAPNET_OUT or .)")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("importance", help="permutation feature importance")
    p.add_argument("model", help="serialized model file")
    _add_dataset_args(p)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--top-k", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the report here as well")
    p.set_defaults(func=cmd_importance)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        _fail("validation", exc)
        return 2
    except RUNTIME_ERRORS as exc:
        _fail("runtime", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
