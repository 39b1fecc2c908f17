"""Fusion operators, graph baseline, trainers and gradient verification."""

from .gradcheck import gradient_check
from .graph import KnnGraph, build_knn_graph, propagate, spectral_radius
from .io import load_model, save_model
from .losses import BPRBatch, InfoNCEBatch, bpr_loss, infonce_from_logits, infonce_loss
from .models import (
    KINDS,
    FusionModel,
    average_projection,
    forward_batch,
    fuse_forward,
    fuse_table,
    init_model,
)
from .train import TrainConfig, smore_lite, train_bpr, train_contrastive

__all__ = [
    "KINDS", "BPRBatch", "FusionModel", "InfoNCEBatch", "KnnGraph", "TrainConfig",
    "average_projection", "bpr_loss", "build_knn_graph", "forward_batch", "fuse_forward",
    "fuse_table", "gradient_check", "infonce_from_logits", "infonce_loss", "init_model",
    "load_model", "propagate", "save_model", "smore_lite", "spectral_radius", "train_bpr",
    "train_contrastive",
]
