"""Acceptance gate: one test per criterion, each printing a pass/fail line."""

import itertools
import math
import os

import numpy as np
import pytest

from gapnet.benchmark import BenchmarkConfig, run_benchmark
from gapnet.cli import main as cli_main
from gapnet.clustering import FeatureCluster, signature_clusters
from gapnet.dataset import save_csv, split
from gapnet.evaluation import (
    auc,
    delong_test,
    permutation_importance,
    roc_curve,
    structural_components,
    trapezoid_area,
)
from gapnet.models import (
    TrainConfig,
    build_subnet,
    build_vanilla,
    fuse,
    gapnet_gradients,
    predict,
    train_stage1,
    train_stage2,
    _train_rows_for,
)
from gapnet.numerics import bce_loss, finite_diff_grad
from gapnet.synth import MadelonConfig, generate_madelon, inject_gaps, paper_gap_pattern
from conftest import make_dataset, random_gapped


@pytest.fixture(autouse=True)
def _capture_bypass(capfd):
    global _CAPFD
    _CAPFD = capfd
    yield
    _CAPFD = None


def report(criterion, ok, detail=""):
    # write past pytest's capture so each criterion's verdict always shows
    with _CAPFD.disabled():
        print(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}", flush=True)
    assert ok, f"{criterion}: {detail}"


def test_criterion_1_madelon_reproduction(paper_madelon):
    jobs = min(4, os.cpu_count() or 1)
    cfg = BenchmarkConfig(runs=20, epochs=2000, dropout_rate=0.5, seed=20260824,
                          jobs=jobs)
    result = run_benchmark(paper_madelon, signature_clusters(paper_madelon), cfg)
    g = result["models"]["gapnet"]
    v = result["models"]["vanilla"]
    p = result["delong"]["pooled"]["p"]
    gap = g["auc_mean"] - v["auc_mean"]
    detail = (
        f"gapnet {g['auc_mean']:.3f}±{g['auc_std']:.3f} vs "
        f"vanilla {v['auc_mean']:.3f}±{v['auc_std']:.3f}, "
        f"gap {gap:.3f}, pooled DeLong p {p:.2e}"
    )
    report(
        "criterion 1 (Madelon reproduction)",
        gap >= 0.10 and p < 0.01 and g["auc_std"] <= v["auc_std"],
        detail,
    )


def test_criterion_2_architecture_conformance():
    cases = [
        (build_vanilla(40), [40, 80, 80, 1]),
        (build_subnet(FeatureCluster("a", list(range(25)))), [25, 50, 50, 1]),
        (build_subnet(FeatureCluster("b", list(range(15)))), [15, 30, 30, 1]),
        (build_vanilla(82), [82, 164, 164, 1]),
        (build_subnet(FeatureCluster("c", list(range(5)))), [5, 10, 10, 1]),
    ]
    ok = all(
        [net.input_width] + [l.fan_out for l in net.layers] == expected
        for net, expected in cases
    )
    report("criterion 2 (architecture widths)", ok,
           "40/80, 25/50, 15/30, 82/164, 5/10 all exact")


def _rel_error(analytic_flat, numeric_flat):
    worst = 0.0
    for a, n in zip(analytic_flat, numeric_flat):
        scale = np.maximum(np.abs(a) + np.abs(n), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - n) / scale)))
    return worst


def _jitter_biases(net, rng):
    # keep ReLU pre-activations away from the kink at exactly zero, where
    # the subgradient convention and central differences legitimately differ
    for layer in net.layers:
        layer.biases += rng.uniform(0.05, 0.15, size=layer.biases.shape)


def test_criterion_3_gradient_correctness():
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        # vanilla/sub-network family (same 2x construction rule)
        for f in (5, 4):
            net = build_vanilla(f, dropout_rate=0.0, rng=rng)
            _jitter_biases(net, rng)
            x = rng.standard_normal((6, f))
            y = rng.integers(0, 2, 6).astype(float)
            cache = net.forward(x, mode="train")
            analytic = [g for pair in net.backprop(cache, y) for g in pair]
            numeric = [g for pair in finite_diff_grad(net, x, y) for g in pair]
            worst = max(worst, _rel_error(analytic, numeric))
        # fused family: two bodies plus the fusion node, bodies unfrozen
        clusters = [FeatureCluster("a", [0, 1, 2]), FeatureCluster("b", [3, 4])]
        subnets = [build_subnet(c, dropout_rate=0.0, rng=rng) for c in clusters]
        model = fuse(subnets, clusters, rng, freeze_bodies=False)
        for body in model.bodies:
            _jitter_biases(body, rng)
        X = rng.standard_normal((6, 5))
        y = rng.integers(0, 2, 6).astype(float)
        caches, concat, scores = model.forward(X, mode="train")
        analytic = gapnet_gradients(model, caches, concat, scores, y)
        params = [model.fusion.weights, model.fusion.biases]
        for body in model.bodies:
            for layer in body.layers:
                params.extend((layer.weights, layer.biases))

        def loss():
            _, _, s = model.forward(X, mode="infer")
            return bce_loss(s, y)

        numeric = []
        for arr in params:
            g = np.zeros_like(arr)
            flat, gflat = arr.reshape(-1), g.reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + 1e-6
                up = loss()
                flat[k] = orig - 1e-6
                down = loss()
                flat[k] = orig
                gflat[k] = (up - down) / 2e-6
            numeric.append(g)
        worst = max(worst, _rel_error(analytic, numeric))
    report("criterion 3 (gradient correctness)", worst < 1e-4,
           f"max relative error {worst:.2e} over 10 seeds x 3 families")


def test_criterion_4_auc_oracle_equivalence():
    rng = np.random.default_rng(4)
    exact = True
    worst_trap = 0.0
    for _ in range(1000):
        n = int(rng.integers(3, 13))
        labels = rng.integers(0, 2, n)
        labels[:2] = [0, 1]
        scores = np.round(rng.random(n), 1)
        fast = auc(scores, labels)
        pos = scores[labels == 1]
        neg = scores[labels == 0]
        brute = sum(
            1.0 if p > q else (0.5 if p == q else 0.0) for p in pos for q in neg
        ) / (pos.size * neg.size)
        exact &= fast == brute
        worst_trap = max(
            worst_trap, abs(trapezoid_area(roc_curve(scores, labels)) - fast)
        )
    report("criterion 4 (AUC oracle equivalence)",
           exact and worst_trap < 1e-12,
           f"1000 instances exact; max trapezoid gap {worst_trap:.2e}")


def test_criterion_5_delong_correctness():
    rng = np.random.default_rng(5)
    labels = rng.integers(0, 2, 25)
    labels[:2] = [0, 1]
    s = rng.random(25)
    same = delong_test(s, s, labels)
    ok = same.z == 0.0 and same.p == 1.0
    worst_comp, worst_p = 0.0, 0.0
    for _ in range(200):
        n = int(rng.integers(4, 15))
        lab = rng.integers(0, 2, n)
        lab[:2] = [0, 1]
        sc = np.round(rng.random(n), 1)
        v10, v01 = structural_components(sc, lab)
        pos, neg = sc[lab == 1], sc[lab == 0]
        b10 = np.array([
            sum(1.0 if p > q else (0.5 if p == q else 0.0) for q in neg) / neg.size
            for p in pos
        ])
        b01 = np.array([
            sum(1.0 if p > q else (0.5 if p == q else 0.0) for p in pos) / pos.size
            for q in neg
        ])
        worst_comp = max(worst_comp, float(np.abs(v10 - b10).max()),
                         float(np.abs(v01 - b01).max()))
        other = np.round(rng.random(n), 1)
        try:
            res = delong_test(sc, other, lab)
        except Exception:
            continue
        worst_p = max(worst_p, abs(res.p - math.erfc(abs(res.z) / math.sqrt(2))))
    report("criterion 5 (DeLong correctness)",
           ok and worst_comp < 1e-10 and worst_p < 1e-12,
           f"components {worst_comp:.2e}, p identity {worst_p:.2e}")


def test_criterion_6_split_integrity(paper_madelon):
    rng = np.random.default_rng(6)
    ok = True
    for i in range(1000):
        ds = random_gapped(np.random.default_rng(i), p_missing=0.3)
        s = split(ds, 0.25, rng, stratified=bool(i % 2))
        ok &= np.intersect1d(s.train_rows, s.test_rows).size == 0
        ok &= bool(ds.present[s.test_rows].all())
        ok &= s.train_rows.size + s.test_rows.size == ds.n_samples
        plan = signature_clusters(ds)
        for cluster in plan.clusters:
            rows = _train_rows_for(ds, s, cluster.features)
            ok &= np.intersect1d(rows, s.test_rows).size == 0
    m = split(paper_madelon, 0.2, rng)
    madelon_ok = (m.test_rows.size, m.train_rows.size) == (20, 980)
    n, f = 3926, 4
    present = np.ones((n, f), dtype=bool)
    present[501:, 0] = False
    covid = make_dataset(np.random.default_rng(0).standard_normal((n, f)),
                         present=present, labels=np.arange(n) % 2)
    c = split(covid, 0.2, rng)
    covid_ok = (c.test_rows.size, c.train_rows.size) == (100, 3826)
    report("criterion 6 (split integrity)", ok and madelon_ok and covid_ok,
           "1000 random splits clean; shapes 20/980 and 100/3826")


def test_criterion_7_freezing_contract(paper_madelon):
    plan = signature_clusters(paper_madelon)
    ok = True
    for run in range(10):
        cfg = TrainConfig(epochs=2, seed=run, freeze_bodies=True)
        s = split(paper_madelon, 0.2, np.random.default_rng(run))
        subnets = train_stage1(paper_madelon, plan, s, cfg)
        model = fuse(subnets, plan.clusters, np.random.default_rng(run),
                     freeze_bodies=True)
        before = [
            [(l.weights.copy(), l.biases.copy()) for l in b.layers]
            for b in model.bodies
        ]
        train_stage2(model, paper_madelon, s, cfg)
        for body, saved in zip(model.bodies, before):
            for layer, (w, b) in zip(body.layers, saved):
                ok &= np.array_equal(layer.weights, w)
                ok &= np.array_equal(layer.biases, b)
    report("criterion 7 (freezing contract)", ok,
           "body parameters bit-identical across 10 runs")


def test_criterion_8_clustering(paper_madelon):
    plan = signature_clusters(paper_madelon)
    exact = (
        len(plan.clusters) == 2
        and plan.clusters[0].features == list(range(25))
        and plan.clusters[1].features == list(range(25, 40))
        and plan.complete_counts == [550, 550]
    )
    partition = True
    for i in range(1000):
        ds = random_gapped(np.random.default_rng(10_000 + i))
        p = signature_clusters(ds)
        seen = sorted(j for c in p.clusters for j in c.features)
        partition &= seen == list(range(ds.n_features))
    report("criterion 8 (clustering)", exact and partition,
           "paper clusters exact; partition holds on 1000 random masks")


def test_criterion_9_permutation_importance():
    rng = np.random.default_rng(9)
    # dead input: zero out every path from feature 2 of a real network
    net = build_vanilla(3, dropout_rate=0.0, rng=rng)
    net.layers[0].weights[2, :] = 0.0
    X = rng.standard_normal((30, 3))
    labels = rng.integers(0, 2, 30)
    labels[:2] = [0, 1]
    res_dead = permutation_importance(
        lambda M: net.forward(M, mode="infer").outputs.reshape(-1),
        X, labels, feature=2, repeats=20, rng=np.random.default_rng(1),
    )
    dead_ok = abs(res_dead["mean_drop"]) < 1e-12

    # 8-row single-feature threshold toy vs exhaustive permutation average
    labels8 = np.array([0, 1, 0, 1, 0, 1, 0, 1])
    X8 = np.random.default_rng(2).standard_normal((8, 2))
    X8[:, 0] = np.where(labels8 == 1, 1.0, -1.0) + 0.1 * X8[:, 0]
    perms = [np.array(p) for p in itertools.permutations(range(8))]
    res = permutation_importance(
        lambda M: M[:, 0], X8, labels8, feature=0, permutations=perms
    )
    baseline = auc(X8[:, 0], labels8)
    total = 0.0
    for p in perms:
        shuffled = X8[:, 0][list(p)]
        total += auc(shuffled, labels8)
    toy_ok = abs(res["mean_drop"] - (baseline - total / len(perms))) < 1e-10
    report("criterion 9 (permutation importance)", dead_ok and toy_ok,
           f"dead drop {res_dead['mean_drop']:.1e}; toy gap matches exhaustive")


def test_criterion_10_reproducibility(tmp_path):
    rng = np.random.default_rng(0)
    n = 50
    labels = np.arange(n) % 2
    values = rng.standard_normal((n, 4))
    values[:, 0] += np.where(labels == 1, 1.5, -1.5)
    present = np.ones((n, 4), dtype=bool)
    present[:8, :2] = False
    ds = make_dataset(values, present=present, labels=labels)
    csv_path = tmp_path / "tiny.csv"
    save_csv(ds, csv_path)
    artifacts = ("report.json", "roc.csv", "histogram.csv")
    outputs = {}
    for name, jobs in (("a", 1), ("b", 1), ("c", 4)):
        out_dir = tmp_path / name
        code = cli_main([
            "benchmark", str(csv_path), "--runs", "4", "--epochs", "10",
            "--jobs", str(jobs), "--seed", "3", "--out", str(out_dir),
            "--missing-token", "",
        ])
        assert code == 0
        outputs[name] = {a: (out_dir / a).read_bytes() for a in artifacts}
    same_rerun = all(outputs["a"][a] == outputs["b"][a] for a in artifacts)
    same_jobs = all(outputs["a"][a] == outputs["c"][a] for a in artifacts)
    report("criterion 10 (reproducibility)", same_rerun and same_jobs,
           "byte-identical across reruns and --jobs 1 vs 4")
