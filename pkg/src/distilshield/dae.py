"""Denoising autoencoder: reconstruction scoring, threshold inference, filtering.

The autoencoder is trained on (corrupted, clean) pairs so it maps inputs
back onto the clean data manifold; per-example reconstruction error (MSE
between an input and its own reconstruction) is then the detection score,
cut at a quantile threshold inferred from a reference batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .attacks import run_attack
from .data import Dataset
from .errors import DataError, FormatError, ParameterError, ShapeError

DAE_HEADER = "distilshield-dae 1"
PASS_MODES = ("reconstructed", "original")


@dataclass
class DaeModel:
    """Encoder (input -> latent) and decoder (latent -> input, sigmoid head)."""

    encoder: nn.NetworkModel
    decoder: nn.NetworkModel

    @property
    def input_dim(self) -> int:
        return self.encoder.input_dim

    @property
    def latent_dim(self) -> int:
        return self.encoder.output_dim

    def combined(self) -> nn.NetworkModel:
        return nn.NetworkModel(self.encoder.layers + self.decoder.layers, 0)


@dataclass
class Threshold:
    value: float
    method: str = "inferred"  # "initial" for a hand-set starting value
    reference_size: int = 0

    def __post_init__(self):
        if self.value < 0:
            raise ParameterError(f"threshold must be >= 0, got {self.value}")


@dataclass
class FilterOutcome:
    kept: Dataset
    discarded_indices: np.ndarray
    per_example_error: np.ndarray

    @property
    def kept_indices(self):
        n = self.per_example_error.shape[0]
        return np.setdiff1d(np.arange(n), self.discarded_indices)


@dataclass
class CorruptionSpec:
    """How training pairs are corrupted.

    Gaussian pixel noise (clipped to [0, 1]) and, when an attack model is
    supplied, adversarial versions of each clean image; identity pairs keep
    the autoencoder anchored to clean inputs. At least one source of pairs
    must be enabled.
    """

    noise_sigma: float = 0.1
    attack_model: nn.NetworkModel | None = None
    attack_params: object | None = None
    attack_kind: str = "fgsm"
    include_identity: bool = True

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ParameterError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if (self.attack_model is None) != (self.attack_params is None):
            raise ParameterError("attack_model and attack_params must be given together")
        if not (self.include_identity or self.noise_sigma > 0 or self.attack_model is not None):
            raise ParameterError("corruption spec produces no training pairs")


def default_dae_dims(input_dim, hidden_dim=None, latent_dim=None):
    if latent_dim is None:
        latent_dim = max(1, input_dim // 4)
    if hidden_dim is None:
        hidden_dim = max(latent_dim, input_dim // 2)
    return hidden_dim, latent_dim


def build_dae(input_dim, hidden_dim=None, latent_dim=None, seed=0) -> DaeModel:
    """One hidden layer per side, relu inside, sigmoid output head."""
    hidden_dim, latent_dim = default_dae_dims(input_dim, hidden_dim, latent_dim)
    specs = [
        nn.LayerSpec(input_dim, hidden_dim, "relu"),
        nn.LayerSpec(hidden_dim, latent_dim, "relu"),
        nn.LayerSpec(latent_dim, hidden_dim, "relu"),
        nn.LayerSpec(hidden_dim, input_dim, "sigmoid"),
    ]
    model = nn.init_model(specs, 0, seed)
    encoder = nn.NetworkModel(model.layers[:2], 0)
    decoder = nn.NetworkModel(model.layers[2:], 0)
    return DaeModel(encoder, decoder)


def encode(dae, x):
    """Latent representation: the encoder's activations at its last layer."""
    return nn.forward(dae.encoder, x)


def decode(dae, h):
    """Reconstruction from a latent vector; sigmoid keeps outputs in (0, 1)."""
    return nn.forward(dae.decoder, h)


def reconstruct(dae, x):
    return decode(dae, encode(dae, x))


def reconstruction_error(dae, x) -> float:
    """Per-example mean over pixels of the squared reconstruction residual."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"reconstruction_error expects one example, got shape {x.shape}")
    return nn.loss_mse(x, reconstruct(dae, x))


def reconstruction_errors(dae, X):
    """Vector of per-example reconstruction errors for a batch."""
    X = np.asarray(X, dtype=np.float64)
    recon = reconstruct(dae, X)
    return ((X - recon) ** 2).mean(axis=1)


def _corruption_pairs(clean, corruption, rng):
    X = clean.flat
    inputs = []
    if corruption.include_identity:
        inputs.append(X)
    if corruption.noise_sigma > 0:
        noisy = np.clip(X + rng.normal(0.0, corruption.noise_sigma, X.shape), 0.0, 1.0)
        inputs.append(noisy)
    if corruption.attack_model is not None:
        adv = run_attack(
            corruption.attack_model, X, clean.labels, corruption.attack_params, corruption.attack_kind
        )
        inputs.append(adv)
    corrupted = np.concatenate(inputs)
    targets = np.concatenate([X] * len(inputs))
    return corrupted, targets


def train_dae(clean, config, corruption, hidden_dim=None, latent_dim=None, val_fraction=0.1):
    """Train encoder/decoder end to end with MSE on (corrupted, clean) pairs.

    A seeded slice of the pairs is held out to report per-epoch validation
    reconstruction loss alongside the training loss.
    """
    if len(clean) == 0:
        raise DataError("cannot train a DAE on an empty dataset")
    rng = np.random.default_rng(config.seed)
    corrupted, targets = _corruption_pairs(clean, corruption, rng)
    n = corrupted.shape[0]
    perm = rng.permutation(n)
    n_val = min(max(int(val_fraction * n), 1), n - 1) if n > 1 else 0
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    dae = build_dae(clean.flat.shape[1], hidden_dim, latent_dim, seed=config.seed)
    model = dae.combined()
    model, history = nn.train(
        model,
        corrupted[train_idx],
        targets[train_idx],
        config,
        loss_kind="mse",
        val_inputs=corrupted[val_idx] if n_val else None,
        val_targets=targets[val_idx] if n_val else None,
    )
    k = len(dae.encoder.layers)
    trained = DaeModel(
        nn.NetworkModel(model.layers[:k], 0), nn.NetworkModel(model.layers[k:], 0)
    )
    return trained, history


def threshold_from_scores(scores, target_fraction) -> float:
    """(1 - target_fraction) quantile with linear interpolation.

    When the expected flag count is below one example, the cutoff is parked
    at the batch maximum: zero flags is the closest achievable fraction,
    and interpolation would otherwise always leave the maximum flagged.
    """
    if not 0.0 < target_fraction < 1.0:
        raise ParameterError(f"target_fraction must be in (0, 1), got {target_fraction}")
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise DataError("cannot infer a threshold from an empty reference batch")
    if target_fraction * scores.size < 1.0:
        return float(scores.max())
    return float(np.quantile(scores, 1.0 - target_fraction))


def infer_threshold(dae, reference, target_fraction) -> Threshold:
    """Calibrate the cutoff so ~target_fraction of the reference batch is flagged."""
    if len(reference) == 0:
        raise DataError("reference batch is empty")
    errors = reconstruction_errors(dae, reference.flat)
    value = threshold_from_scores(errors, target_fraction)
    return Threshold(value=value, method="inferred", reference_size=len(reference))


def filter_dataset(dae, dataset, threshold, pass_mode="reconstructed") -> FilterOutcome:
    """Discard examples scoring above the threshold; pass the rest through.

    With ``pass_mode="reconstructed"`` survivors are replaced by their
    reconstructions (labels preserved); ``"original"`` keeps the raw pixels.
    """
    if pass_mode not in PASS_MODES:
        raise ParameterError(f"unknown pass_mode {pass_mode!r}")
    X = dataset.flat
    recon = reconstruct(dae, X)
    errors = ((X - recon) ** 2).mean(axis=1)
    flagged = errors > threshold.value
    keep = ~flagged
    kept_pixels = recon[keep] if pass_mode == "reconstructed" else X[keep]
    kept = Dataset(
        kept_pixels.reshape((-1,) + tuple(dataset.image_shape)),
        dataset.labels[keep],
        dataset.class_count,
    )
    return FilterOutcome(kept, np.flatnonzero(flagged), errors)


def write_filter_csv(outcome, path):
    """CSV rows: index, reconstruction error, flagged (0/1)."""
    flagged = np.zeros(outcome.per_example_error.shape[0], dtype=int)
    flagged[outcome.discarded_indices] = 1
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write("index,error,flagged\n")
        for i, err in enumerate(outcome.per_example_error):
            f.write(f"{i},{err!r},{flagged[i]}\n")


def save_threshold(threshold, path):
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write("distilshield-threshold 1\n")
        f.write(f"value {format(threshold.value, '.17g')}\n")
        f.write(f"method {threshold.method}\n")
        f.write(f"reference_size {threshold.reference_size}\n")


def load_threshold(path) -> Threshold:
    with open(path, "r", encoding="ascii") as f:
        lines = [ln.rstrip("\n") for ln in f]
    if not lines or lines[0] != "distilshield-threshold 1":
        raise FormatError(f"bad threshold header in {path}")
    fields = dict(ln.split(" ", 1) for ln in lines[1:] if ln)
    return Threshold(
        value=float(fields["value"]),
        method=fields.get("method", "inferred"),
        reference_size=int(fields.get("reference_size", 0)),
    )


def save_dae(dae, path):
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write(DAE_HEADER + "\n")
        f.write("encoder\n")
        nn.write_model(f, dae.encoder)
        f.write("decoder\n")
        nn.write_model(f, dae.decoder)


def load_dae(path) -> DaeModel:
    with open(path, "r", encoding="ascii") as f:
        lines = iter([ln.rstrip("\n") for ln in f])
    if next(lines, None) != DAE_HEADER:
        raise FormatError(f"bad DAE header in {path}")
    if next(lines, None) != "encoder":
        raise FormatError("missing encoder block")
    encoder, _ = nn.read_model(lines)
    if next(lines, None) != "decoder":
        raise FormatError("missing decoder block")
    decoder, _ = nn.read_model(lines)
    if encoder.output_dim != decoder.input_dim:
        raise FormatError("encoder latent width does not match decoder input")
    return DaeModel(encoder, decoder)
