"""Structured-sparsity training and out-in-channel pruning toolkit."""

from .autodiff import Tensor
from .datasets import Dataset, gen_synthetic, load_idx
from .importance import OutInChannelGroup, score_all
from .model import ChannelPair, Layer, Model, build_model
from .pruning import (
    FlopsReport,
    PruningPlan,
    apply_surgery,
    count_flops,
    prune_loop,
    select_prune_set,
)
from .training import RunConfig, evaluate_accuracy, fine_tune, train

__all__ = [
    "Tensor",
    "Dataset",
    "gen_synthetic",
    "load_idx",
    "OutInChannelGroup",
    "score_all",
    "ChannelPair",
    "Layer",
    "Model",
    "build_model",
    "FlopsReport",
    "PruningPlan",
    "apply_surgery",
    "count_flops",
    "prune_loop",
    "select_prune_set",
    "RunConfig",
    "evaluate_accuracy",
    "fine_tune",
    "train",
]

__version__ = "0.1.0"
