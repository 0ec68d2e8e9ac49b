"""Repeated-resampling benchmark: train vanilla, gap-aware, and per-cluster
models on fresh splits, then aggregate ROC/AUC statistics across runs."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import dataset as ds_mod
from .clustering import signature_clusters
from .evaluation import (
    aggregate_runs,
    auc,
    confusion_at,
    delong_test,
    five_number_summary,
    metrics,
    roc_curve,
)
from .models import TrainConfig, predict, predict_subnet, train_gapnet, train_vanilla


class BenchmarkError(RuntimeError):
    pass


@dataclass
class BenchmarkConfig:
    runs: int = 100
    test_fraction: float = 0.2
    epochs: int = 2000
    learning_rate: float = 1e-3
    batch_size: int | None = None
    dropout_rate: float = 0.5
    hidden_multiplier: int = 2
    seed: int = 0
    freeze_bodies: bool = True
    normalize: bool = True
    stratified: bool = True
    jobs: int = 1

    def train_config(self, run_seed):
        return TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            dropout_rate=self.dropout_rate,
            hidden_multiplier=self.hidden_multiplier,
            seed=run_seed,
            freeze_bodies=self.freeze_bodies,
        )


def run_single(ds, plan, cfg, run_index):
    """One resampled split: train every model, score the shared test rows."""
    run_seed = cfg.seed ^ run_index
    split_rng = np.random.default_rng(np.random.SeedSequence([run_seed, 17]))
    split = ds_mod.split(ds, cfg.test_fraction, split_rng, stratified=cfg.stratified)
    if cfg.normalize:
        stats = ds_mod.compute_stats(ds, split.train_rows)
        work = ds_mod.normalize(ds, stats)
    else:
        work = ds
    tcfg = cfg.train_config(run_seed)
    vanilla = train_vanilla(work, split, tcfg)
    gap_model, subnets = train_gapnet(work, plan, split, tcfg)
    test = split.test_rows
    scores = {
        "vanilla": predict(vanilla, work, test).tolist(),
        "gapnet": predict(gap_model, work, test).tolist(),
    }
    for net, cluster in zip(subnets, plan.clusters):
        scores[cluster.name] = predict_subnet(net, cluster, work, test).tolist()
    return {
        "run": run_index,
        "seed": run_seed,
        "test_rows": test.tolist(),
        "labels": ds.labels[test].tolist(),
        "scores": scores,
    }


def _worker(args):
    ds, plan, cfg, run_index = args
    try:
        return run_single(ds, plan, cfg, run_index)
    except Exception as exc:
        raise BenchmarkError(
            f"run {run_index} (seed {cfg.seed ^ run_index}) failed: {exc}"
        ) from exc


def run_benchmark(ds, plan=None, cfg=None):
    """All runs plus aggregation; identical output regardless of job count."""
    cfg = cfg or BenchmarkConfig()
    if cfg.runs < 2:
        raise BenchmarkError("need at least 2 runs")
    if plan is None:
        plan = signature_clusters(ds)
    tasks = [(ds, plan, cfg, i) for i in range(cfg.runs)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_worker, tasks))
    else:
        results = [_worker(t) for t in tasks]
    results.sort(key=lambda r: r["run"])
    return aggregate_benchmark(results, plan, cfg)


def aggregate_benchmark(results, plan, cfg):
    model_names = ["gapnet", "vanilla"] + [c.name for c in plan.clusters]
    report = {"models": {}, "per_run": results}
    pooled = {name: [] for name in model_names}
    pooled_labels = []
    curves = {name: [] for name in model_names}
    aucs = {name: [] for name in model_names}
    per_run_delong = []
    for res in results:
        labels = np.asarray(res["labels"])
        pooled_labels.extend(res["labels"])
        for name in model_names:
            s = np.asarray(res["scores"][name])
            pooled[name].extend(res["scores"][name])
            aucs[name].append(auc(s, labels))
            curves[name].append(roc_curve(s, labels))
        d = delong_test(res["scores"]["gapnet"], res["scores"]["vanilla"], labels)
        per_run_delong.append({"run": res["run"], "z": d.z, "p": d.p})
    pooled_labels = np.asarray(pooled_labels)
    for name in model_names:
        agg = aggregate_runs(curves[name], aucs[name])
        counts = confusion_at(np.asarray(pooled[name]), pooled_labels)
        rep = metrics(counts)
        report["models"][name] = {
            "auc_mean": agg.auc_mean,
            "auc_std": agg.auc_std,
            "aucs": agg.aucs.tolist(),
            "boxplot": five_number_summary(agg.aucs),
            "roc": {
                "fpr": agg.fpr_grid.tolist(),
                "mean_tpr": agg.mean_tpr.tolist(),
                "std_tpr": agg.std_tpr.tolist(),
            },
            "histogram": {
                "edges": agg.histogram_edges.tolist(),
                "counts": agg.histogram_counts.tolist(),
            },
            "confusion": {
                "tp": counts.tp, "fp": counts.fp, "tn": counts.tn, "fn": counts.fn,
            },
            "metrics": {
                "sensitivity": rep.sensitivity,
                "specificity": rep.specificity,
                "accuracy": rep.accuracy,
                "precision": rep.precision,
            },
        }
    pooled_d = delong_test(pooled["gapnet"], pooled["vanilla"], pooled_labels)
    report["delong"] = {
        "pooled": {
            "auc_gapnet": pooled_d.auc_a,
            "auc_vanilla": pooled_d.auc_b,
            "variance": pooled_d.variance,
            "z": pooled_d.z,
            "p": pooled_d.p,
        },
        "per_run": per_run_delong,
    }
    # single-cluster models listed in descending order of median AUC
    cluster_names = [c.name for c in plan.clusters]
    report["cluster_order"] = sorted(
        cluster_names,
        key=lambda n: -report["models"][n]["boxplot"]["median"],
    )
    return report
