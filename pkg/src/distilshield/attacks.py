"""Gradient-sign attacks (FGSM, I-FGSM) and training-set poisoning."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .data import Dataset
from .errors import ParameterError, ShapeError

PROJECTION_MODES = ("ball", "cumulative")
ATTACK_KINDS = ("fgsm", "ifgsm")


@dataclass
class AttackParams:
    """L-inf attack knobs.

    ``projection_mode="ball"`` keeps every I-FGSM iterate inside the
    epsilon-ball around the original input; ``"cumulative"`` only clips to
    the data range, so the perturbation can grow to alpha * num_iterations.
    """

    epsilon: float
    alpha: float = 0.01
    num_iterations: int = 10
    clip_min: float = 0.0
    clip_max: float = 1.0
    projection_mode: str = "cumulative"

    def __post_init__(self):
        if self.epsilon < 0:
            raise ParameterError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.alpha <= 0:
            raise ParameterError(f"alpha must be positive, got {self.alpha}")
        if self.num_iterations < 1:
            raise ParameterError(f"num_iterations must be >= 1, got {self.num_iterations}")
        if self.clip_min >= self.clip_max:
            raise ParameterError(
                f"clip_min {self.clip_min} must be below clip_max {self.clip_max}"
            )
        if self.projection_mode not in PROJECTION_MODES:
            raise ParameterError(f"unknown projection_mode {self.projection_mode!r}")


@dataclass
class PoisonReport:
    poisoned_indices: np.ndarray  # sorted, unique
    attack_kinds: list[str]  # one per poisoned index
    mean_linf: float


def _loss_input_grad(model, X, labels):
    """Per-example input gradient of the T=1 cross-entropy loss."""
    targets = nn.one_hot(labels, model.output_classes)
    return nn.backward(model, X, targets, 1.0, "ce").input_grad


def _check_inputs(model, x, label):
    X, single = nn._as_batch(x, model.input_dim)
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    if labels.shape[0] != X.shape[0]:
        raise ShapeError(f"{X.shape[0]} inputs but {labels.shape[0]} labels")
    return X, labels, single


def fgsm(model, x, label, params):
    """Single gradient-sign step: clip(x + eps * sign(grad_x loss)).

    sign(0) is 0, so pixels with zero gradient are left untouched; the
    result always stays within the eps-ball and the clip range.
    """
    X, labels, single = _check_inputs(model, x, label)
    if params.epsilon == 0:
        out = X.copy()
        return out[0] if single else out
    grad = _loss_input_grad(model, X, labels)
    adv = np.clip(X + params.epsilon * np.sign(grad), params.clip_min, params.clip_max)
    return adv[0] if single else adv


def ifgsm(model, x, label, params):
    """Iterated gradient-sign steps of size alpha.

    Ball mode projects each iterate back into the eps-ball around the
    original input; cumulative mode only clips to the data range.
    """
    X, labels, single = _check_inputs(model, x, label)
    original = X
    adv = X
    for _ in range(params.num_iterations):
        grad = _loss_input_grad(model, adv, labels)
        adv = np.clip(adv + params.alpha * np.sign(grad), params.clip_min, params.clip_max)
        if params.projection_mode == "ball":
            adv = np.clip(adv, original - params.epsilon, original + params.epsilon)
    return adv[0] if single else adv


def run_attack(model, x, label, params, attack_kind):
    if attack_kind == "fgsm":
        return fgsm(model, x, label, params)
    if attack_kind == "ifgsm":
        return ifgsm(model, x, label, params)
    raise ParameterError(f"unknown attack kind {attack_kind!r}")


def poison_dataset(dataset, model, params, fraction, attack_kind="fgsm", seed=0):
    """Replace floor(fraction * n) seeded-uniform examples by adversarial versions.

    Labels are left unchanged (clean-label poisoning); returns the new
    dataset plus a report of the touched indices.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ParameterError(f"fraction must be in [0, 1], got {fraction}")
    n = len(dataset)
    count = int(math.floor(fraction * n + 1e-9))
    rng = np.random.default_rng(seed)
    indices = np.sort(rng.choice(n, size=count, replace=False))
    images = dataset.images.copy()
    mean_linf = 0.0
    if count:
        flat = dataset.flat[indices]
        adv = run_attack(model, flat, dataset.labels[indices], params, attack_kind)
        mean_linf = float(np.abs(adv - flat).max(axis=1).mean())
        images[indices] = adv.reshape((count,) + tuple(dataset.image_shape))
    poisoned = Dataset(images, dataset.labels.copy(), dataset.class_count)
    report = PoisonReport(indices, [attack_kind] * count, mean_linf)
    return poisoned, report


def write_poison_report(report, path, params=None, total=None):
    """CSV with one row per poisoned index; parameters echoed as comments."""
    with open(path, "w", encoding="ascii", newline="\n") as f:
        if params is not None:
            f.write(f"# attack.epsilon={params.epsilon!r}\n")
            f.write(f"# attack.alpha={params.alpha!r}\n")
            f.write(f"# attack.num_iterations={params.num_iterations}\n")
            f.write(f"# attack.clip_min={params.clip_min!r}\n")
            f.write(f"# attack.clip_max={params.clip_max!r}\n")
            f.write(f"# attack.projection_mode={params.projection_mode}\n")
        if total is not None:
            f.write(f"# dataset.size={total}\n")
        f.write(f"# poison.count={len(report.poisoned_indices)}\n")
        f.write(f"# poison.mean_linf={report.mean_linf!r}\n")
        f.write("index,attack_kind\n")
        for idx, kind in zip(report.poisoned_indices, report.attack_kinds):
            f.write(f"{int(idx)},{kind}\n")
