"""Central finite-difference checking of the analytic gradients.

The differencing path only ever calls ``mean_loss`` on perturbed copies of
the model, so it shares nothing with the backprop code it is checking.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from . import nn

# Denominator floor for the relative error, so finite-difference noise on
# near-zero gradient components does not register as disagreement.
REL_ERR_FLOOR = 1e-4


@dataclass
class TrialResult:
    description: str
    max_rel_err: float


@dataclass
class GradcheckResult:
    trials: list[TrialResult]
    tolerance: float

    @property
    def max_rel_err(self) -> float:
        return max(t.max_rel_err for t in self.trials)

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def _loss_at(model, x, target, temperature, loss_kind):
    return nn.mean_loss(model, x, target, temperature, loss_kind)


def finite_difference_grads(model, x, target, temperature=1.0, loss_kind="ce", h=1e-5):
    """Central differences of the mean loss for every weight, bias, and input entry."""
    x = np.asarray(x, dtype=np.float64)
    weight_grads = []
    bias_grads = []
    for k, layer in enumerate(model.layers):
        gw = np.zeros_like(layer.weights)
        for idx in np.ndindex(layer.weights.shape):
            m = copy.deepcopy(model)
            m.layers[k].weights[idx] += h
            up = _loss_at(m, x, target, temperature, loss_kind)
            m.layers[k].weights[idx] -= 2 * h
            down = _loss_at(m, x, target, temperature, loss_kind)
            gw[idx] = (up - down) / (2 * h)
        gb = np.zeros_like(layer.bias)
        for idx in np.ndindex(layer.bias.shape):
            m = copy.deepcopy(model)
            m.layers[k].bias[idx] += h
            up = _loss_at(m, x, target, temperature, loss_kind)
            m.layers[k].bias[idx] -= 2 * h
            down = _loss_at(m, x, target, temperature, loss_kind)
            gb[idx] = (up - down) / (2 * h)
        weight_grads.append(gw)
        bias_grads.append(gb)
    input_grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xp[idx] += h
        up = _loss_at(model, xp, target, temperature, loss_kind)
        xp[idx] -= 2 * h
        down = _loss_at(model, xp, target, temperature, loss_kind)
        input_grad[idx] = (up - down) / (2 * h)
    return weight_grads, bias_grads, input_grad


def relative_error(a, b, floor=REL_ERR_FLOOR):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.abs(a - b) / denom


def compare_grads(model, x, target, temperature=1.0, loss_kind="ce", h=1e-5):
    """Max relative error between analytic and finite-difference gradients."""
    analytic = nn.backward(model, x, target, temperature, loss_kind)
    fw, fb, fx = finite_difference_grads(model, x, target, temperature, loss_kind, h)
    worst = 0.0
    for aw, bw in zip(analytic.weight_grads, fw):
        worst = max(worst, float(relative_error(aw, bw).max()))
    for ab, bb in zip(analytic.bias_grads, fb):
        worst = max(worst, float(relative_error(ab, bb).max()))
    # Input grads for a single example equal the mean-loss grads directly.
    worst = max(worst, float(relative_error(analytic.input_grad, fx).max()))
    return worst


def _random_trial(rng, dim_cap=16):
    depth = int(rng.integers(1, 4))
    dims = [int(rng.integers(1, dim_cap + 1)) for _ in range(depth + 1)]
    loss_kind = "ce" if rng.random() < 0.5 else "mse"
    classes = dims[-1] if (loss_kind == "ce" or rng.random() < 0.5) else 0
    specs = []
    for i in range(depth):
        act = nn.ACTIVATIONS[int(rng.integers(0, len(nn.ACTIVATIONS)))]
        specs.append(nn.LayerSpec(dims[i], dims[i + 1], act))
    model = nn.init_model(specs, classes, int(rng.integers(0, 2**32)))
    x = rng.normal(0.0, 1.0, size=dims[0])
    if classes > 0 and loss_kind == "ce":
        t = rng.random(dims[-1]) + 0.05
        t = t / t.sum()
    elif classes > 0:
        t = rng.random(dims[-1])
        t = t / t.sum()
    else:
        t = rng.random(dims[-1])
    temperature = 1.0 if rng.random() < 0.5 else 5.0
    desc = (
        f"dims={'x'.join(str(d) for d in dims)}"
        f" acts={'/'.join(s.activation for s in specs)}"
        f" loss={loss_kind} T={temperature:g} classes={classes}"
    )
    return model, x, t, temperature, loss_kind, desc


def run_gradcheck(trials=100, seed=20240, dim_cap=16, h=1e-5, tolerance=1e-4, include_defaults=True):
    """Run the finite-difference suite over random small models.

    With ``include_defaults`` the pipeline's default classifier and
    autoencoder shapes are checked too (on a reduced input width so the
    differencing stays quick).
    """
    rng = np.random.default_rng(seed)
    results = []
    if include_defaults:
        clf = nn.init_model(
            [nn.LayerSpec(64, 16, "relu"), nn.LayerSpec(16, 8, "relu"), nn.LayerSpec(8, 4, "identity")],
            4,
            int(rng.integers(0, 2**32)),
        )
        x = rng.random(64)
        t = nn.one_hot(int(rng.integers(0, 4)), 4)[0]
        results.append(
            TrialResult("default-classifier ce T=5", compare_grads(clf, x, t, 5.0, "ce", h))
        )
        dae = nn.init_model(
            [
                nn.LayerSpec(64, 16, "relu"),
                nn.LayerSpec(16, 8, "relu"),
                nn.LayerSpec(8, 16, "relu"),
                nn.LayerSpec(16, 64, "sigmoid"),
            ],
            0,
            int(rng.integers(0, 2**32)),
        )
        xr = rng.random(64)
        results.append(
            TrialResult("default-autoencoder mse T=1", compare_grads(dae, xr, xr, 1.0, "mse", h))
        )
    for i in range(trials):
        model, x, t, temperature, loss_kind, desc = _random_trial(rng, dim_cap)
        results.append(TrialResult(f"trial {i}: {desc}", compare_grads(model, x, t, temperature, loss_kind, h)))
    return GradcheckResult(results, tolerance)
