"""Vanilla baseline and two-stage gap-aware model construction and training.

Stage I trains one sub-network per feature cluster on the rows complete for
that cluster (test rows excluded). Stage II removes the sub-network output
heads, concatenates their last hidden activations, and trains a single
sigmoid output node over the concatenation on the fully complete rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .clustering import FeatureCluster
from .numerics import (
    AdamState,
    DenseLayer,
    DropoutSpec,
    MlpNetwork,
    NumericsError,
    adam_step,
    dense_layer,
    glorot_init,
    sigmoid,
)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 2000
    learning_rate: float = 1e-3
    batch_size: int | None = None  # None = full batch
    dropout_rate: float = 0.5
    hidden_multiplier: int = 2
    seed: int = 0
    freeze_bodies: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise TrainingError("epochs must be >= 1")


def build_vanilla(n_features, hidden_multiplier=2, dropout_rate=0.5, rng=None):
    """MLP with two hidden layers of hidden_multiplier * n_features ReLU units,
    dropout after the second hidden layer, and a single sigmoid output."""
    if n_features < 1:
        raise TrainingError("need at least one feature")
    rng = rng if rng is not None else np.random.default_rng(0)
    width = hidden_multiplier * n_features
    layers = [
        dense_layer(n_features, width, "relu", rng),
        dense_layer(width, width, "relu", rng),
        dense_layer(width, 1, "sigmoid", rng),
    ]
    dropout = [DropoutSpec(dropout_rate, placement=1)] if dropout_rate > 0 else []
    return MlpNetwork(layers, dropout)


def build_subnet(cluster, hidden_multiplier=2, dropout_rate=0.5, rng=None):
    """Same construction rule applied to one cluster's feature count."""
    return build_vanilla(
        len(cluster.features), hidden_multiplier, dropout_rate, rng=rng
    )


def _trainable_params(net):
    out = []
    for layer in net.layers:
        if layer.trainable:
            out.extend((layer.weights, layer.biases))
    return out


def fit_network(net, X, y, cfg, rng):
    """Train in place with Adam on mean BCE; full batch unless batch_size set."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] == 0:
        raise TrainingError("empty training set")
    params = _trainable_params(net)
    state = AdamState(learning_rate=cfg.learning_rate)
    n = X.shape[0]
    for _ in range(cfg.epochs):
        if cfg.batch_size is None or cfg.batch_size >= n:
            slices = [np.arange(n)]
        else:
            order = rng.permutation(n)
            slices = [
                order[i : i + cfg.batch_size] for i in range(0, n, cfg.batch_size)
            ]
        for idx in slices:
            cache = net.forward(X[idx], mode="train", rng=rng)
            grads = net.backprop(cache, y[idx])
            flat = []
            for layer, (gw, gb) in zip(net.layers, grads):
                if layer.trainable:
                    flat.extend((gw, gb))
            adam_step(params, flat, state)
    return net


class GapNetModel:
    """Fused model: frozen (or fine-tunable) sub-network bodies plus one
    trainable sigmoid output node over their concatenated hidden outputs."""

    def __init__(self, bodies, clusters, fusion, freeze_bodies=True):
        expected = sum(b.output_width for b in bodies)
        if fusion.fan_in != expected:
            raise NumericsError(
                f"fusion input width {fusion.fan_in} != sum of body widths {expected}"
            )
        self.bodies = bodies
        self.clusters = clusters
        self.fusion = fusion
        self.freeze_bodies = freeze_bodies
        for body in self.bodies:
            for layer in body.layers:
                layer.trainable = not freeze_bodies

    @property
    def feature_indices(self):
        return [j for c in self.clusters for j in c.features]

    def forward(self, X, mode="infer", rng=None):
        """X has full dataset width; each body slices its cluster's columns."""
        caches = [
            body.forward(X[:, c.features], mode=mode, rng=rng)
            for body, c in zip(self.bodies, self.clusters)
        ]
        concat = np.hstack([cache.outputs for cache in caches])
        z = concat @ self.fusion.weights + self.fusion.biases
        return caches, concat, sigmoid(z)

    def predict(self, X):
        _, _, scores = self.forward(np.asarray(X, dtype=np.float64))
        return scores.reshape(-1)


def fuse(subnets, clusters, rng, freeze_bodies=True):
    """Drop each sub-network's output head and add a fresh fused output node."""
    if len(subnets) != len(clusters):
        raise TrainingError("need exactly one sub-network per cluster")
    bodies = []
    for net in subnets:
        body_layers = [
            DenseLayer(l.weights.copy(), l.biases.copy(), l.activation)
            for l in net.layers[:-1]
        ]
        body_dropout = [
            DropoutSpec(s.rate, s.placement)
            for s in net.dropout
            if s.placement < len(body_layers)
        ]
        bodies.append(MlpNetwork(body_layers, body_dropout))
    width = sum(b.output_width for b in bodies)
    fusion = DenseLayer(glorot_init(width, 1, rng), np.zeros(1), "sigmoid")
    return GapNetModel(bodies, list(clusters), fusion, freeze_bodies=freeze_bodies)


def gapnet_gradients(model, caches, concat, scores, labels):
    """Gradients of mean BCE for the fused model, fusion node first, then
    body parameters in layer order (only when bodies are unfrozen)."""
    labels = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
    delta = (scores - labels) / labels.size
    grads = [concat.T @ delta, delta.sum(axis=0)]
    if not model.freeze_bodies:
        upstream = delta @ model.fusion.weights.T
        offset = 0
        for body, cache in zip(model.bodies, caches):
            w = body.output_width
            body_grads = body.backprop_from(cache, upstream[:, offset : offset + w])
            for layer, (gw, gb) in zip(body.layers, body_grads):
                if layer.trainable:
                    grads.extend((gw, gb))
            offset += w
    return grads


def fit_gapnet(model, X, y, cfg, rng):
    """Stage-II training: Adam on the fusion node (and bodies when unfrozen).

    Body dropout stays active in train mode; the fusion node sees the
    post-dropout body outputs.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] == 0:
        raise TrainingError("empty stage-II training set")
    params = [model.fusion.weights, model.fusion.biases]
    if not model.freeze_bodies:
        for body in model.bodies:
            params.extend(_trainable_params(body))
    state = AdamState(learning_rate=cfg.learning_rate)
    n = X.shape[0]
    for _ in range(cfg.epochs):
        if cfg.batch_size is None or cfg.batch_size >= n:
            slices = [np.arange(n)]
        else:
            order = rng.permutation(n)
            slices = [
                order[i : i + cfg.batch_size] for i in range(0, n, cfg.batch_size)
            ]
        for idx in slices:
            caches, concat, scores = model.forward(X[idx], mode="train", rng=rng)
            grads = gapnet_gradients(model, caches, concat, scores, y[idx])
            adam_step(params, grads, state)
    return model


def _train_rows_for(ds, split, feature_indices):
    rows = ds.complete_rows_for(feature_indices)
    excluded = np.isin(rows, split.test_rows)
    return rows[~excluded]


def train_stage1(ds, plan, split, cfg):
    """Train one sub-network per cluster on its complete rows minus test rows."""
    subnets = []
    base = np.random.SeedSequence(cfg.seed)
    seeds = base.spawn(len(plan.clusters))
    for cluster, seq in zip(plan.clusters, seeds):
        rows = _train_rows_for(ds, split, cluster.features)
        if rows.size == 0:
            raise TrainingError(
                f"cluster {cluster.name!r} has no training rows after test exclusion"
            )
        rng = np.random.default_rng(seq)
        net = build_subnet(
            cluster, cfg.hidden_multiplier, cfg.dropout_rate, rng=rng
        )
        X = ds.dense_block(rows, cluster.features)
        fit_network(net, X, ds.labels[rows], cfg, rng)
        subnets.append(net)
    return subnets


def train_stage2(model, ds, split, cfg):
    """Train the fused model on the fully complete rows minus test rows."""
    rows = _train_rows_for(ds, split, model.feature_indices)
    if rows.size == 0:
        raise TrainingError("no complete training rows for stage II")
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1000)[-1])
    X = np.full((rows.size, ds.n_features), np.nan)
    X[:, model.feature_indices] = ds.dense_block(rows, model.feature_indices)
    return fit_gapnet(model, X, ds.labels[rows], cfg, rng)


def train_gapnet(ds, plan, split, cfg):
    """Both stages: sub-networks, fuse, then fusion training."""
    subnets = train_stage1(ds, plan, split, cfg)
    fuse_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1001)[-1])
    model = fuse(subnets, plan.clusters, fuse_rng, freeze_bodies=cfg.freeze_bodies)
    train_stage2(model, ds, split, cfg)
    return model, subnets


def train_vanilla(ds, split, cfg):
    """Baseline: train on the fully complete rows minus test rows."""
    rows = _train_rows_for(ds, split, range(ds.n_features))
    if rows.size == 0:
        raise TrainingError("no complete training rows for the baseline")
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[-1])
    net = build_vanilla(
        ds.n_features, cfg.hidden_multiplier, cfg.dropout_rate, rng=rng
    )
    X = ds.dense_block(rows, range(ds.n_features))
    fit_network(net, X, ds.labels[rows], cfg, rng)
    return net


def predict(model, ds, rows):
    """Deterministic scores for complete-enough rows of a dataset."""
    rows = np.asarray(rows, dtype=int)
    if isinstance(model, GapNetModel):
        X = np.full((rows.size, ds.n_features), np.nan)
        X[:, model.feature_indices] = ds.dense_block(rows, model.feature_indices)
        return model.predict(X)
    X = ds.dense_block(rows, range(model.input_width))
    return model.forward(X, mode="infer").outputs.reshape(-1)


def predict_subnet(net, cluster, ds, rows):
    """Score rows with a stage-I sub-network (its own cluster features only)."""
    X = ds.dense_block(np.asarray(rows, dtype=int), cluster.features)
    return net.forward(X, mode="infer").outputs.reshape(-1)


# --- serialization -----------------------------------------------------------

def _layer_to_json(layer):
    return {
        "weights": layer.weights.tolist(),
        "biases": layer.biases.tolist(),
        "activation": layer.activation,
        "trainable": layer.trainable,
    }


def _layer_from_json(obj):
    return DenseLayer(
        weights=np.array(obj["weights"], dtype=np.float64),
        biases=np.array(obj["biases"], dtype=np.float64),
        activation=obj["activation"],
        trainable=obj["trainable"],
    )


def _net_to_json(net):
    return {
        "layers": [_layer_to_json(l) for l in net.layers],
        "dropout": [{"rate": s.rate, "placement": s.placement} for s in net.dropout],
    }


def _net_from_json(obj):
    return MlpNetwork(
        [_layer_from_json(l) for l in obj["layers"]],
        [DropoutSpec(s["rate"], s["placement"]) for s in obj["dropout"]],
    )


def save_model(model, path, feature_names=None, normalization=None):
    """Write a model (plus optional normalization stats) as JSON.

    Floats go through repr, which round-trips float64 exactly, so a loaded
    model predicts bit-identically.
    """
    if isinstance(model, GapNetModel):
        obj = {
            "kind": "gapnet",
            "bodies": [_net_to_json(b) for b in model.bodies],
            "clusters": [
                {"name": c.name, "features": list(c.features)} for c in model.clusters
            ],
            "fusion": _layer_to_json(model.fusion),
            "freeze_bodies": model.freeze_bodies,
        }
    else:
        obj = {"kind": "mlp", "network": _net_to_json(model)}
    if feature_names is not None:
        obj["feature_names"] = list(feature_names)
    if normalization is not None:
        obj["normalization"] = {
            "mean": normalization.mean.tolist(),
            "std": normalization.std.tolist(),
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh)
        fh.write("\n")


def load_model(path):
    """Returns (model, feature_names or None, NormalizationStats or None)."""
    from .dataset import NormalizationStats

    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj["kind"] == "gapnet":
        model = GapNetModel(
            bodies=[_net_from_json(b) for b in obj["bodies"]],
            clusters=[
                FeatureCluster(c["name"], c["features"]) for c in obj["clusters"]
            ],
            fusion=_layer_from_json(obj["fusion"]),
            freeze_bodies=obj["freeze_bodies"],
        )
    elif obj["kind"] == "mlp":
        model = _net_from_json(obj["network"])
    else:
        raise TrainingError(f"unknown model kind {obj['kind']!r}")
    stats = None
    if "normalization" in obj:
        stats = NormalizationStats(
            mean=np.array(obj["normalization"]["mean"]),
            std=np.array(obj["normalization"]["std"]),
        )
    return model, obj.get("feature_names"), stats
