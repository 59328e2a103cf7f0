"""Defensive distillation: teacher at high temperature, student on soft labels.

The teacher is trained on hard labels with a softened softmax
(train_temperature), its full probability vectors become the training
targets for the student, and both are read out at test_temperature
(default 1) for prediction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import nn
from .errors import DataError, ParameterError, ShapeError

DEFAULT_HIDDEN_DIMS = (64, 32)


@dataclass
class DistillConfig:
    teacher_config: nn.TrainConfig
    student_config: nn.TrainConfig
    train_temperature: float = 5.0
    test_temperature: float = 1.0

    def __post_init__(self):
        if self.train_temperature <= 0 or self.test_temperature <= 0:
            raise ParameterError("temperatures must be positive")


@dataclass
class SoftLabeledDataset:
    inputs: np.ndarray  # (n, d)
    soft_labels: np.ndarray  # (n, classes), rows sum to 1
    source: str = ""

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.soft_labels = np.asarray(self.soft_labels, dtype=np.float64)
        if self.inputs.shape[0] != self.soft_labels.shape[0]:
            raise ShapeError(
                f"{self.inputs.shape[0]} inputs but {self.soft_labels.shape[0]} soft labels"
            )
        if self.soft_labels.size:
            if self.soft_labels.min() < 0 or self.soft_labels.max() > 1:
                raise DataError("soft labels must lie in [0, 1]")
            sums = self.soft_labels.sum(axis=1)
            if np.abs(sums - 1.0).max() > 1e-9:
                raise DataError("each soft label must sum to 1 within 1e-9")

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def class_count(self):
        return self.soft_labels.shape[1]


def _classifier_specs(input_dim, hidden_dims, classes):
    dims = [input_dim, *hidden_dims, classes]
    specs = [nn.LayerSpec(dims[i], dims[i + 1], "relu") for i in range(len(dims) - 2)]
    specs.append(nn.LayerSpec(dims[-2], dims[-1], "identity"))
    return specs


def train_teacher(dataset, config, hidden_dims=DEFAULT_HIDDEN_DIMS):
    """Train the teacher on one-hot labels with the softened softmax."""
    if len(dataset) == 0:
        raise DataError("teacher training set is empty")
    specs = _classifier_specs(dataset.flat.shape[1], hidden_dims, dataset.class_count)
    model = nn.init_model(specs, dataset.class_count, config.teacher_config.seed)
    train_cfg = replace(config.teacher_config, temperature=config.train_temperature)
    targets = nn.one_hot(dataset.labels, dataset.class_count)
    return nn.train(model, dataset.flat, targets, train_cfg, loss_kind="ce")


def soft_labels(teacher, dataset, temperature) -> SoftLabeledDataset:
    """Teacher probability vectors over the dataset, inputs carried through."""
    probs = nn.forward(teacher, dataset.flat, temperature)
    return SoftLabeledDataset(dataset.flat, probs, source=f"teacher@T={temperature:g}")


def train_student(soft_dataset, config, hidden_dims=DEFAULT_HIDDEN_DIMS):
    """Train the student against the teacher's soft labels."""
    if len(soft_dataset) == 0:
        raise DataError("student training set is empty")
    specs = _classifier_specs(
        soft_dataset.inputs.shape[1], hidden_dims, soft_dataset.class_count
    )
    model = nn.init_model(specs, soft_dataset.class_count, config.student_config.seed)
    train_cfg = replace(config.student_config, temperature=config.train_temperature)
    return nn.train(model, soft_dataset.inputs, soft_dataset.soft_labels, train_cfg, loss_kind="ce")


def predict(model, x, temperature=1.0):
    """Argmax class plus the probability vector; ties break to the lowest index."""
    probs = nn.forward(model, x, temperature)
    if probs.ndim != 1:
        raise ShapeError("predict expects one example; use forward for batches")
    return int(np.argmax(probs)), probs


def accuracy(model, dataset, temperature=1.0) -> float:
    """Plain argmax accuracy over a dataset."""
    if len(dataset) == 0:
        raise DataError("cannot score an empty dataset")
    probs = nn.forward(model, dataset.flat, temperature)
    return float((np.argmax(probs, axis=1) == dataset.labels).mean())


def write_soft_labels_csv(soft_dataset, path):
    """CSV rows: input id, then one 17-significant-digit column per class."""
    classes = soft_dataset.class_count
    header = "id," + ",".join(f"p{c}" for c in range(classes))
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write(f"# source={soft_dataset.source}\n")
        f.write(header + "\n")
        for i, row in enumerate(soft_dataset.soft_labels):
            f.write(str(i) + "," + ",".join(format(v, ".17g") for v in row) + "\n")
