"""Incomplete multi-view multi-label classification by factorizing and disentangling."""

from .errors import TrainingDiverged, ValidationError
from .data import (
    CorruptionSpec,
    FeatureMaskSet,
    MultiViewDataset,
    apply_masks,
    load_dataset,
    sample_feature_masks,
    save_dataset,
    simulate_incompleteness,
)
from .losses import LossWeights
from .metrics import MetricsReport, evaluate
from .model import MlpSpec, MVFDNet
from .train import TrainConfig, predict, train_one_stage, train_stage1, train_stage2

__version__ = "0.1.0"

__all__ = [
    "CorruptionSpec",
    "FeatureMaskSet",
    "LossWeights",
    "MetricsReport",
    "MlpSpec",
    "MVFDNet",
    "MultiViewDataset",
    "TrainConfig",
    "TrainingDiverged",
    "ValidationError",
    "apply_masks",
    "evaluate",
    "load_dataset",
    "predict",
    "sample_feature_masks",
    "save_dataset",
    "simulate_incompleteness",
    "train_one_stage",
    "train_stage1",
    "train_stage2",
]
