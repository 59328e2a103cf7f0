"""Minimal dense neural-network stack on float64 numpy arrays.

Everything downstream (attacks, autoencoder filter, distillation, gating)
is built on the pieces here: layer specs, scaled-uniform init, a
temperature softmax head, cross-entropy / MSE losses, exact analytic
gradients, plain SGD, and a text checkpoint format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    FormatError,
    NumericalError,
    ParameterError,
    ShapeError,
)

ACTIVATIONS = ("relu", "sigmoid", "identity")
LOSS_KINDS = ("ce", "mse")

# Floor applied to probabilities inside log losses so they never hit -inf.
LOG_FLOOR = 1e-12

CHECKPOINT_HEADER = "distilshield-model 1"


@dataclass(frozen=True)
class LayerSpec:
    """Shape and nonlinearity of one dense layer."""

    in_dim: int
    out_dim: int
    activation: str = "relu"


@dataclass
class Layer:
    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str


@dataclass
class NetworkModel:
    """Ordered dense layers plus an optional softmax head.

    ``output_classes > 0`` marks a classifier whose forward pass ends in a
    temperature softmax over the last layer's activations; ``0`` marks a
    regression head (e.g. an autoencoder half) that returns the last
    activation directly.
    """

    layers: list[Layer]
    output_classes: int

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[0]


@dataclass
class TrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int
    seed: int
    temperature: float = 1.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ParameterError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 0:
            raise ParameterError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.temperature <= 0:
            raise ParameterError(f"temperature must be positive, got {self.temperature}")
        if self.seed < 0:
            raise ParameterError(f"seed must be a nonnegative integer, got {self.seed}")


@dataclass
class Gradients:
    """Per-layer weight/bias gradients plus the gradient at the input.

    Weight and bias gradients are taken of the mean loss over the batch;
    ``input_grad`` rows are gradients of each example's own loss (so a
    single-step attacker can consume them directly).
    """

    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]
    input_grad: np.ndarray


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float


def validate_specs(specs, classes):
    if not specs:
        raise ConfigError("at least one layer spec is required")
    for i, spec in enumerate(specs):
        if spec.in_dim < 1 or spec.out_dim < 1:
            raise ConfigError(f"layer {i}: dims must be >= 1, got {spec.in_dim}x{spec.out_dim}")
        if spec.activation not in ACTIVATIONS:
            raise ConfigError(f"layer {i}: unknown activation {spec.activation!r}")
    for i in range(len(specs) - 1):
        if specs[i].out_dim != specs[i + 1].in_dim:
            raise ConfigError(
                f"layer {i} out_dim {specs[i].out_dim} != layer {i + 1} in_dim {specs[i + 1].in_dim}"
            )
    if classes < 0:
        raise ConfigError(f"classes must be >= 0, got {classes}")
    if classes > 0 and specs[-1].out_dim != classes:
        raise ConfigError(
            f"last layer out_dim {specs[-1].out_dim} != class count {classes}"
        )


def init_model(specs, classes, seed) -> NetworkModel:
    """Build a model with scaled-uniform weights and zero biases.

    Each layer's weights are drawn uniformly from
    [-sqrt(6/(in+out)), +sqrt(6/(in+out))], which keeps early activations
    and gradients on a sane scale. Fully deterministic given the seed.
    """
    validate_specs(specs, classes)
    rng = np.random.default_rng(seed)
    layers = []
    for spec in specs:
        bound = math.sqrt(6.0 / (spec.in_dim + spec.out_dim))
        weights = rng.uniform(-bound, bound, size=(spec.out_dim, spec.in_dim))
        layers.append(Layer(weights, np.zeros(spec.out_dim), spec.activation))
    return NetworkModel(layers, classes)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return _sigmoid(z)
    return z


def _activate_grad(z, kind):
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "sigmoid":
        s = _sigmoid(z)
        return s * (1.0 - s)
    return np.ones_like(z)


def _as_batch(x, dim, name="input"):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        if arr.shape[0] != dim:
            raise ShapeError(f"{name} length {arr.shape[0]}, expected {dim}")
        return arr[None, :], True
    if arr.ndim == 2:
        if arr.shape[1] != dim:
            raise ShapeError(f"{name} width {arr.shape[1]}, expected {dim}")
        return arr, False
    raise ShapeError(f"{name} must be 1-D or 2-D, got shape {arr.shape}")


def _run_layers(model, X):
    """Forward pass caching pre-activations and activations per layer."""
    pre = []
    acts = [X]
    for layer in model.layers:
        z = acts[-1] @ layer.weights.T + layer.bias
        pre.append(z)
        acts.append(_activate(z, layer.activation))
    return pre, acts


def softmax(logits, temperature=1.0):
    """Temperature softmax with max-subtraction for stability."""
    if temperature <= 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(model, x, temperature=1.0):
    """Run the network; classifiers end in softmax(logits / temperature).

    Accepts a single example ``(d,)`` or a batch ``(n, d)`` and returns a
    matching shape.
    """
    if temperature <= 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    X, single = _as_batch(x, model.input_dim)
    _, acts = _run_layers(model, X)
    out = acts[-1]
    if model.output_classes > 0:
        out = softmax(out, temperature)
    return out[0] if single else out


def loss_cross_entropy(probs, target):
    """-sum(target * ln(probs)) with probs floored at 1e-12.

    For 2-D inputs, returns the mean per-example loss over rows.
    """
    p = np.asarray(probs, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"probs shape {p.shape} != target shape {t.shape}")
    terms = np.where(t > 0, -t * np.log(np.maximum(p, LOG_FLOOR)), 0.0)
    if p.ndim == 2:
        return float(terms.sum(axis=1).mean())
    return float(terms.sum())


def loss_mse(x, x_hat):
    """Mean over elements of the squared difference."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(x_hat, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape {a.shape} != shape {b.shape}")
    return float(np.mean((a - b) ** 2))


def _loss_and_output_grad(model, out, targets, temperature, loss_kind, n):
    """Loss plus dLoss/d(final activation) for the batch-mean loss."""
    if loss_kind not in LOSS_KINDS:
        raise ParameterError(f"unknown loss kind {loss_kind!r}")
    if model.output_classes > 0:
        probs = softmax(out, temperature)
        if targets.shape != probs.shape:
            raise ShapeError(f"target shape {targets.shape} != output shape {probs.shape}")
        if loss_kind == "ce":
            loss = loss_cross_entropy(probs, targets)
            g = (probs - targets) / (temperature * n)
        else:
            loss = loss_mse(targets, probs)
            dy = 2.0 * (probs - targets) / (targets.shape[1] * n)
            dot = (dy * probs).sum(axis=1, keepdims=True)
            g = probs * (dy - dot) / temperature
    else:
        if targets.shape != out.shape:
            raise ShapeError(f"target shape {targets.shape} != output shape {out.shape}")
        if loss_kind == "ce":
            raise ParameterError("cross-entropy requires a softmax head (output_classes > 0)")
        loss = loss_mse(targets, out)
        g = 2.0 * (out - targets) / (targets.shape[1] * n)
    return loss, g


def _backprop(model, pre, acts, g_out, n):
    weight_grads = [None] * len(model.layers)
    bias_grads = [None] * len(model.layers)
    d_act = g_out
    for k in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[k]
        dz = d_act * _activate_grad(pre[k], layer.activation)
        weight_grads[k] = dz.T @ acts[k]
        bias_grads[k] = dz.sum(axis=0)
        d_act = dz @ layer.weights
    return weight_grads, bias_grads, d_act * n


def _loss_and_grads(model, X, targets, temperature, loss_kind):
    pre, acts = _run_layers(model, X)
    n = X.shape[0]
    loss, g = _loss_and_output_grad(model, acts[-1], targets, temperature, loss_kind, n)
    wg, bg, input_grad = _backprop(model, pre, acts, g, n)
    return loss, Gradients(wg, bg, input_grad)


def backward(model, x, target, temperature=1.0, loss_kind="ce"):
    """Exact analytic gradients of the selected loss.

    Returns per-layer weight/bias gradients (of the mean loss when ``x``
    is a batch) and the input gradient, shaped like ``x``.
    """
    if temperature <= 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    X, single = _as_batch(x, model.input_dim)
    tgt_dim = model.output_classes if model.output_classes > 0 else model.output_dim
    T, t_single = _as_batch(target, tgt_dim, name="target")
    if t_single != single or T.shape[0] != X.shape[0]:
        raise ShapeError(f"target batch shape {T.shape} does not match input {X.shape}")
    loss, grads = _loss_and_grads(model, X, T, temperature, loss_kind)
    if single:
        grads.input_grad = grads.input_grad[0]
    return grads


def mean_loss(model, x, target, temperature=1.0, loss_kind="ce"):
    """Mean loss of the model output against targets."""
    out = forward(model, x, temperature)
    if loss_kind == "ce":
        return loss_cross_entropy(out, target)
    if loss_kind == "mse":
        return loss_mse(np.asarray(target, dtype=np.float64), out)
    raise ParameterError(f"unknown loss kind {loss_kind!r}")


def sgd_step(model, grads, learning_rate):
    """Plain SGD: w <- w - lr * g. Returns a new model; no momentum."""
    if len(grads.weight_grads) != len(model.layers):
        raise ShapeError("gradient layer count does not match model")
    layers = []
    for layer, gw, gb in zip(model.layers, grads.weight_grads, grads.bias_grads):
        if gw.shape != layer.weights.shape or gb.shape != layer.bias.shape:
            raise ShapeError("gradient shapes do not match model layers")
        layers.append(
            Layer(layer.weights - learning_rate * gw, layer.bias - learning_rate * gb, layer.activation)
        )
    return NetworkModel(layers, model.output_classes)


def train(model, inputs, targets, config, loss_kind="ce", val_inputs=None, val_targets=None):
    """Mini-batch SGD with a seeded shuffle each epoch.

    Records per-epoch train loss (running mean over batches, pre-update)
    and validation loss (post-epoch; computed on the training data when no
    validation set is given). Deterministic given the config seed.
    """
    X = np.asarray(inputs, dtype=np.float64)
    Y = np.asarray(targets, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ShapeError(f"inputs {X.shape} and targets {Y.shape} must be matching 2-D arrays")
    n = X.shape[0]
    if n == 0:
        raise DataError("training dataset is empty")
    if val_inputs is None:
        Xv, Yv = X, Y
    else:
        Xv = np.asarray(val_inputs, dtype=np.float64)
        Yv = np.asarray(val_targets, dtype=np.float64)
    history = []
    if config.epochs == 0:
        return model, history
    rng = np.random.default_rng(config.seed)
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            loss, grads = _loss_and_grads(model, X[idx], Y[idx], config.temperature, loss_kind)
            total += loss * idx.shape[0]
            model = sgd_step(model, grads, config.learning_rate)
        if not all(np.isfinite(l.weights).all() and np.isfinite(l.bias).all() for l in model.layers):
            raise NumericalError(f"non-finite weights after epoch {epoch}; lower the learning rate")
        val_loss = mean_loss(model, Xv, Yv, config.temperature, loss_kind)
        history.append(EpochStats(epoch, total / n, val_loss))
    return model, history


def one_hot(labels, classes):
    lab = np.asarray(labels, dtype=np.int64)
    if lab.ndim == 0:
        lab = lab[None]
    if lab.size and (lab.min() < 0 or lab.max() >= classes):
        raise DataError(f"labels must lie in [0, {classes}), got range [{lab.min()}, {lab.max()}]")
    out = np.zeros((lab.shape[0], classes))
    out[np.arange(lab.shape[0]), lab] = 1.0
    return out


# --- checkpoint format -------------------------------------------------
#
# Plain text, one value per token, floats printed with 17 significant
# digits so a load/save round trip is bit-exact:
#
#   distilshield-model 1
#   classes <N>
#   temperature <T>
#   layers <L>
#   layer <in> <out> <activation>     (L lines)
#   weights <k>                       followed by out_dim rows
#   bias <k>                          followed by one row
#   end


def _fmt(v):
    return format(float(v), ".17g")


def write_model(f, model, temperature=1.0):
    f.write(CHECKPOINT_HEADER + "\n")
    f.write(f"classes {model.output_classes}\n")
    f.write(f"temperature {_fmt(temperature)}\n")
    f.write(f"layers {len(model.layers)}\n")
    for layer in model.layers:
        out_dim, in_dim = layer.weights.shape
        f.write(f"layer {in_dim} {out_dim} {layer.activation}\n")
    for k, layer in enumerate(model.layers):
        f.write(f"weights {k}\n")
        for row in layer.weights:
            f.write(" ".join(_fmt(v) for v in row) + "\n")
        f.write(f"bias {k}\n")
        f.write(" ".join(_fmt(v) for v in layer.bias) + "\n")
    f.write("end\n")


def _expect(line, prefix):
    if line is None or not line.startswith(prefix):
        raise FormatError(f"expected {prefix!r} in checkpoint, got {line!r}")
    return line[len(prefix) :].strip()


def read_model(lines):
    """Parse one model block from an iterator of stripped lines."""
    header = next(lines, None)
    if header != CHECKPOINT_HEADER:
        raise FormatError(f"bad checkpoint header {header!r}")
    classes = int(_expect(next(lines, None), "classes "))
    temperature = float(_expect(next(lines, None), "temperature "))
    n_layers = int(_expect(next(lines, None), "layers "))
    specs = []
    for _ in range(n_layers):
        parts = _expect(next(lines, None), "layer ").split()
        if len(parts) != 3:
            raise FormatError("malformed layer line")
        specs.append(LayerSpec(int(parts[0]), int(parts[1]), parts[2]))
    validate_specs(specs, classes)
    layers = []
    for k, spec in enumerate(specs):
        _expect(next(lines, None), f"weights {k}")
        rows = []
        for _ in range(spec.out_dim):
            line = next(lines, None)
            if line is None:
                raise FormatError("truncated weight block")
            rows.append([float(v) for v in line.split()])
        weights = np.array(rows, dtype=np.float64)
        if weights.shape != (spec.out_dim, spec.in_dim):
            raise FormatError(f"weight block {k} has shape {weights.shape}")
        _expect(next(lines, None), f"bias {k}")
        line = next(lines, None)
        if line is None:
            raise FormatError("truncated bias block")
        bias = np.array([float(v) for v in line.split()], dtype=np.float64)
        if bias.shape != (spec.out_dim,):
            raise FormatError(f"bias block {k} has shape {bias.shape}")
        layers.append(Layer(weights, bias, spec.activation))
    _expect(next(lines, None), "end")
    model = NetworkModel(layers, classes)
    if not all(np.isfinite(l.weights).all() and np.isfinite(l.bias).all() for l in model.layers):
        raise FormatError("checkpoint contains non-finite weights")
    return model, temperature


def save_model(model, path, temperature=1.0):
    with open(path, "w", encoding="ascii", newline="\n") as f:
        write_model(f, model, temperature)


def load_model(path):
    """Load a checkpoint; returns (model, temperature used in training)."""
    with open(path, "r", encoding="ascii") as f:
        lines = iter([ln.rstrip("\n") for ln in f])
        return read_model(lines)


def hidden_unit_dropout_forward(model, X, dropout_rate, rng):
    """Forward pass zeroing each hidden unit with probability dropout_rate.

    Surviving activations are scaled by 1/(1 - dropout_rate) (inverted
    dropout); the final layer's output is returned untouched by the mask.
    """
    if not 0.0 <= dropout_rate < 1.0:
        raise ParameterError(f"dropout_rate must be in [0, 1), got {dropout_rate}")
    keep = 1.0 - dropout_rate
    a = X
    last = len(model.layers) - 1
    for k, layer in enumerate(model.layers):
        z = a @ layer.weights.T + layer.bias
        a = _activate(z, layer.activation)
        if k < last and dropout_rate > 0.0:
            mask = rng.random(a.shape) >= dropout_rate
            a = a * mask / keep
    return a
