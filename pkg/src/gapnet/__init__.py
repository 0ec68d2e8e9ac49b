"""GapNet: two-stage neural network training for incomplete tabular data."""

__version__ = "0.1.0"

from .clustering import ClusterPlan, FeatureCluster, merge_clusters, signature_clusters
from .dataset import DataSplit, GappedDataset, load_csv, normalize, save_csv, split
from .evaluation import auc, delong_test, roc_curve
from .models import (
    GapNetModel,
    TrainConfig,
    build_subnet,
    build_vanilla,
    fuse,
    predict,
    train_gapnet,
    train_stage1,
    train_stage2,
    train_vanilla,
)
from .synth import GapPattern, MadelonConfig, generate_madelon, inject_gaps

__all__ = [
    "ClusterPlan",
    "DataSplit",
    "FeatureCluster",
    "GapNetModel",
    "GapPattern",
    "GappedDataset",
    "MadelonConfig",
    "TrainConfig",
    "auc",
    "build_subnet",
    "build_vanilla",
    "delong_test",
    "fuse",
    "generate_madelon",
    "inject_gaps",
    "load_csv",
    "merge_clusters",
    "normalize",
    "predict",
    "roc_curve",
    "save_csv",
    "signature_clusters",
    "split",
    "train_gapnet",
    "train_stage1",
    "train_stage2",
    "train_vanilla",
]
