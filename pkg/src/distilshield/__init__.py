"""Defensive distillation with a denoising-autoencoder poison filter.

Modules:
    nn        dense network core (models, softmax, losses, gradients, SGD)
    data      datasets: IDX files, synthetic corpus, splits, manifests
    attacks   FGSM / I-FGSM and training-set poisoning
    dae       denoising autoencoder, reconstruction scoring, threshold, filter
    distill   teacher/student distillation at temperature
    gate      KL + MC-dropout uncertainty gate
    pipeline  end-to-end experiment orchestration
    cli       command-line entry point
"""

from .errors import (
    ConfigError,
    DataError,
    DistilShieldError,
    FormatError,
    NumericalError,
    ParameterError,
    ShapeError,
    StageError,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DistilShieldError",
    "FormatError",
    "NumericalError",
    "ParameterError",
    "ShapeError",
    "StageError",
]

__version__ = "0.1.0"
