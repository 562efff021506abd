"""Interpretable fuzzy clustering with gated neural additive models."""

from .config import KmeansConfig, TrainConfig
from .data import DualDataset, ScalerStats, load_csv, load_labels, make_epoch_batches, standardize
from .explain import ShapeGraphSet, build_shape_graphs, export_shape_graphs
from .gates import AnnealSchedule, GateBank, anneal_step, entmax, entmax_jvp
from .kmeans import inertia, mbk_fit
from .metrics import PartitionPair, adjusted_rand, nmi, normalized_inertia, unsup_accuracy
from .model import ModelState, assign, cluster_logits, init_model, predict_hard
from .objectives import LossBreakdown, clustering_loss, kl_regularizer, total_loss
from .persist import load_model, save_model
from .synth import make_blobs
from .trainer import TrainReport, ablation_mode, fit, fit_multi_seed

__version__ = "0.1.0"

__all__ = [
    "AnnealSchedule",
    "DualDataset",
    "GateBank",
    "KmeansConfig",
    "LossBreakdown",
    "ModelState",
    "PartitionPair",
    "ScalerStats",
    "ShapeGraphSet",
    "TrainConfig",
    "TrainReport",
    "ablation_mode",
    "adjusted_rand",
    "anneal_step",
    "assign",
    "build_shape_graphs",
    "cluster_logits",
    "clustering_loss",
    "entmax",
    "entmax_jvp",
    "export_shape_graphs",
    "fit",
    "fit_multi_seed",
    "inertia",
    "init_model",
    "kl_regularizer",
    "load_csv",
    "load_labels",
    "load_model",
    "make_blobs",
    "make_epoch_batches",
    "mbk_fit",
    "nmi",
    "normalized_inertia",
    "predict_hard",
    "save_model",
    "standardize",
    "total_loss",
    "unsup_accuracy",
]
