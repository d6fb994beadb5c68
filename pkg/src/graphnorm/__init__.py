"""Learned connectional templates for populations of multi-view graphs."""

__version__ = "0.1.0"

from .classifier import MarginClassifier, train_classifier
from .estimator import BaselineIntegrator, DiscriminativeEdgeSelector, MGNNet
from .evaluation import (
    baseline_template,
    centeredness_score,
    classification_protocol,
    discriminativeness,
    extract_features,
    top_k,
)
from .gnn import forward, forward_batch, init_model, load_checkpoint, save_checkpoint
from .loss import symmetric_kl, tcnl, view_norm_weights
from .netdata import (
    MultiViewSample,
    Population,
    SyntheticSpec,
    load_dataset,
    save_dataset,
    simulate_population,
    split_folds,
)
from .topology import clustering_coefficient, effective_size, pagerank, strength, topology_divergence
from .trainer import TrainConfig, run_cv, train_fold

__all__ = [
    "BaselineIntegrator",
    "DiscriminativeEdgeSelector",
    "MGNNet",
    "MarginClassifier",
    "MultiViewSample",
    "Population",
    "SyntheticSpec",
    "TrainConfig",
    "baseline_template",
    "centeredness_score",
    "classification_protocol",
    "clustering_coefficient",
    "discriminativeness",
    "effective_size",
    "extract_features",
    "forward",
    "forward_batch",
    "init_model",
    "load_checkpoint",
    "load_dataset",
    "pagerank",
    "run_cv",
    "save_checkpoint",
    "save_dataset",
    "simulate_population",
    "split_folds",
    "strength",
    "symmetric_kl",
    "tcnl",
    "topology_divergence",
    "top_k",
    "train_classifier",
    "train_fold",
    "view_norm_weights",
]
