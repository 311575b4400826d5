"""Convolutional multi-label text classification with label-wise attention,
reproducible training, grid-search tuning, and dual-definition evaluation."""

from .corpus import (
    Batch,
    Document,
    LabelSpace,
    Vocabulary,
    load_corpus,
    load_embeddings,
    make_batches,
)
from .estimator import ConvTextClassifier
from .metrics import MetricsReport, compute_report, macro_f1_both, micro_f1, precision_at_n
from .model import (
    Hyperparams,
    ModelParams,
    backward,
    bce_loss,
    conv1d,
    forward_caml,
    forward_cnn,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .trainer import TrainConfig, adam_step, fit, predict
from .tuner import GridSpec, aggregate, enumerate_grid, run_trials

__version__ = "0.1.0"

__all__ = [
    "Batch",
    "ConvTextClassifier",
    "Document",
    "GridSpec",
    "Hyperparams",
    "LabelSpace",
    "MetricsReport",
    "ModelParams",
    "TrainConfig",
    "Vocabulary",
    "adam_step",
    "aggregate",
    "backward",
    "bce_loss",
    "compute_report",
    "conv1d",
    "enumerate_grid",
    "fit",
    "forward_caml",
    "forward_cnn",
    "init_params",
    "load_checkpoint",
    "load_corpus",
    "load_embeddings",
    "macro_f1_both",
    "make_batches",
    "micro_f1",
    "precision_at_n",
    "predict",
    "run_trials",
    "save_checkpoint",
]
