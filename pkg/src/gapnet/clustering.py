"""Feature clustering from missingness signatures.

Features whose presence column (which rows have them) is identical form a
natural cluster; a greedy merge step can coarsen the partition while keeping
enough jointly-complete rows per cluster.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class ClusteringError(ValueError):
    pass


@dataclass
class FeatureCluster:
    name: str
    features: list  # ordered, unique 0-based feature indices

    def __post_init__(self):
        self.features = list(self.features)
        if not self.features:
            raise ClusteringError(f"cluster {self.name!r} is empty")
        if len(set(self.features)) != len(self.features):
            raise ClusteringError(f"cluster {self.name!r} repeats a feature")


@dataclass
class ClusterPlan:
    clusters: list  # of FeatureCluster
    complete_counts: list  # complete-row count per cluster, same order
    uncovered_features: list = field(default_factory=list)


@dataclass
class PlanReport:
    valid: bool
    overlaps: list  # (feature index, [cluster names])
    empty_support: list  # cluster names with zero complete rows
    uncovered_features: list
    counts: dict  # cluster name -> complete-row count
    train_counts: dict  # cluster name -> rows after excluding a test set


def signature_clusters(ds):
    """Group features whose presence signatures (mask columns) are identical.

    Clusters are ordered and named by their lowest feature index.
    """
    signatures = {}
    for j in range(ds.n_features):
        key = ds.present[:, j].tobytes()
        signatures.setdefault(key, []).append(j)
    groups = sorted(signatures.values(), key=lambda g: g[0])
    clusters = [
        FeatureCluster(name=f"cluster_{i + 1}", features=g)
        for i, g in enumerate(groups)
    ]
    counts = [int(ds.complete_rows_for(c.features).size) for c in clusters]
    return ClusterPlan(clusters=clusters, complete_counts=counts)


def merge_clusters(plan, ds, min_support):
    """Greedily merge cluster pairs, keeping every cluster's support >= min_support.

    At each step the pair whose union retains the most complete rows is merged,
    provided that union still has at least min_support complete rows. Ties break
    on the lowest feature index involved.
    """
    if min_support < 1:
        raise ClusteringError("min_support must be >= 1")
    too_small = [
        c.name for c, n in zip(plan.clusters, plan.complete_counts) if n < min_support
    ]
    if too_small:
        raise ClusteringError(
            f"min_support {min_support} exceeds the complete-row count of "
            f"cluster(s): {', '.join(too_small)}"
        )
    groups = [list(c.features) for c in plan.clusters]
    while len(groups) > 1:
        best = None
        for a in range(len(groups)):
            for b in range(a + 1, len(groups)):
                union = groups[a] + groups[b]
                count = int(ds.complete_rows_for(union).size)
                if count < min_support:
                    continue
                key = (-count, min(union))
                if best is None or key < best[0]:
                    best = (key, a, b, count)
        if best is None:
            break
        _, a, b, _ = best
        groups[a] = sorted(groups[a] + groups[b])
        del groups[b]
    groups.sort(key=lambda g: g[0])
    clusters = [
        FeatureCluster(name=f"cluster_{i + 1}", features=g)
        for i, g in enumerate(groups)
    ]
    counts = [int(ds.complete_rows_for(c.features).size) for c in clusters]
    return ClusterPlan(
        clusters=clusters,
        complete_counts=counts,
        uncovered_features=list(plan.uncovered_features),
    )


def validate_plan(plan, ds, test_rows=None):
    """Check disjointness, support, and coverage of a plan against a dataset."""
    owners = {}
    overlaps = []
    for cluster in plan.clusters:
        for j in cluster.features:
            owners.setdefault(j, []).append(cluster.name)
    for j, names in sorted(owners.items()):
        if len(names) > 1:
            overlaps.append((j, names))
    covered = set(owners) | set(plan.uncovered_features)
    uncovered = sorted(set(range(ds.n_features)) - set(owners))
    counts, train_counts, empty = {}, {}, []
    excluded = set() if test_rows is None else set(int(r) for r in test_rows)
    for cluster in plan.clusters:
        rows = ds.complete_rows_for(cluster.features)
        counts[cluster.name] = int(rows.size)
        train_counts[cluster.name] = int(sum(1 for r in rows if r not in excluded))
        if rows.size == 0:
            empty.append(cluster.name)
    del covered  # coverage is reported via `uncovered`
    return PlanReport(
        valid=not overlaps and not empty,
        overlaps=overlaps,
        empty_support=empty,
        uncovered_features=uncovered,
        counts=counts,
        train_counts=train_counts,
    )


def load_plan(path, feature_names):
    """Read a plan file: JSON object mapping cluster name -> feature name list."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict) or not raw:
        raise ClusteringError(f"{path}: expected a non-empty cluster mapping")
    name_to_idx = {n: i for i, n in enumerate(feature_names)}
    clusters = []
    for name, feats in raw.items():
        indices = []
        for f in feats:
            if f not in name_to_idx:
                raise ClusteringError(f"{path}: unknown feature {f!r} in {name!r}")
            indices.append(name_to_idx[f])
        clusters.append(FeatureCluster(name=name, features=indices))
    covered = {j for c in clusters for j in c.features}
    uncovered = sorted(set(range(len(feature_names))) - covered)
    return ClusterPlan(clusters=clusters, complete_counts=[], uncovered_features=uncovered)


def save_plan(plan, path, feature_names):
    raw = {c.name: [feature_names[j] for j in c.features] for c in plan.clusters}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(raw, fh, indent=2)
        fh.write("\n")


def attach_counts(plan, ds):
    plan.complete_counts = [
        int(ds.complete_rows_for(c.features).size) for c in plan.clusters
    ]
    return plan
