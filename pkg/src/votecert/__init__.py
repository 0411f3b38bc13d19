"""Margin-based PAC-Bayes risk certificates for weighted majority votes."""

from .bounds import (
    BOUND_IDS,
    BoundResult,
    BoundSpec,
    SearchConfig,
    certify,
)
from .votes import PredictionMatrix, WeightPosterior
from .train import TrainConfig, train_posterior

__version__ = "0.1.0"

__all__ = [
    "BOUND_IDS",
    "BoundResult",
    "BoundSpec",
    "PredictionMatrix",
    "SearchConfig",
    "TrainConfig",
    "WeightPosterior",
    "certify",
    "train_posterior",
    "__version__",
]
