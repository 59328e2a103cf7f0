import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from distilshield import nn
from distilshield.errors import (
    ConfigError,
    DataError,
    ParameterError,
    ShapeError,
)
from distilshield.gradcheck import compare_grads

from conftest import entropy


def small_classifier(seed=0, dims=(4, 5, 3), acts=("relu", "identity")):
    specs = [nn.LayerSpec(dims[i], dims[i + 1], acts[i]) for i in range(len(acts))]
    return nn.init_model(specs, dims[-1], seed)


logit_lists = st.lists(
    st.floats(min_value=-50, max_value=50, allow_nan=False), min_size=2, max_size=12
)


class TestInitModel:
    def test_same_seed_is_bit_identical(self):
        a = small_classifier(seed=7)
        b = small_classifier(seed=7)
        for la, lb in zip(a.layers, b.layers):
            assert np.array_equal(la.weights, lb.weights)
            assert np.array_equal(la.bias, lb.bias)

    def test_scaled_uniform_bound_and_zero_bias(self):
        # (in=4, out=2): bound sqrt(6/6) = 1.0
        model = nn.init_model([nn.LayerSpec(4, 2, "identity")], 2, 3)
        assert np.abs(model.layers[0].weights).max() <= 1.0
        assert np.array_equal(model.layers[0].bias, np.zeros(2))

    def test_different_seeds_differ(self):
        a = small_classifier(seed=1)
        b = small_classifier(seed=2)
        assert any(
            not np.array_equal(la.weights, lb.weights) for la, lb in zip(a.layers, b.layers)
        )

    def test_dim_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            nn.init_model([nn.LayerSpec(4, 3), nn.LayerSpec(2, 2)], 2, 0)

    def test_class_head_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            nn.init_model([nn.LayerSpec(4, 3)], 2, 0)


class TestForward:
    def test_equal_logits_give_uniform(self):
        model = nn.init_model([nn.LayerSpec(3, 4, "identity")], 4, 0)
        for layer in model.layers:
            layer.weights[:] = 0.0
            layer.bias[:] = 2.5
        out = nn.forward(model, np.zeros(3), 1.0)
        assert np.allclose(out, 0.25, atol=1e-15)

    def test_log_two_logits(self):
        # z = [ln 2, 0] at T=1 must give [2/3, 1/3]
        model = nn.NetworkModel(
            [nn.Layer(np.zeros((2, 2)), np.array([math.log(2.0), 0.0]), "identity")], 2
        )
        out = nn.forward(model, np.zeros(2), 1.0)
        assert abs(out[0] - 2.0 / 3.0) < 1e-15
        assert abs(out[1] - 1.0 / 3.0) < 1e-15

    def test_higher_temperature_raises_entropy(self):
        model = nn.NetworkModel(
            [nn.Layer(np.zeros((2, 2)), np.array([1.0, 0.0]), "identity")], 2
        )
        h1 = entropy(nn.forward(model, np.zeros(2), 1.0))
        h5 = entropy(nn.forward(model, np.zeros(2), 5.0))
        assert h5 > h1

    def test_shape_error(self):
        model = small_classifier()
        with pytest.raises(ShapeError):
            nn.forward(model, np.zeros(5), 1.0)

    def test_temperature_must_be_positive(self):
        model = small_classifier()
        with pytest.raises(ParameterError):
            nn.forward(model, np.zeros(4), 0.0)

    @given(logit_lists, st.sampled_from([0.5, 1.0, 2.0, 5.0]))
    def test_softmax_sums_to_one(self, logits, temperature):
        p = nn.softmax(np.array(logits), temperature)
        assert abs(p.sum() - 1.0) <= 1e-12
        assert np.all(p > 0) and np.all(p < 1 + 1e-12)

    @given(logit_lists, st.floats(min_value=-100, max_value=100, allow_nan=False))
    def test_softmax_shift_invariance(self, logits, shift):
        z = np.array(logits)
        assert np.allclose(nn.softmax(z), nn.softmax(z + shift), atol=1e-12)

    # Spread capped so entropy differences stay above float resolution.
    @given(
        st.lists(
            st.floats(min_value=-10, max_value=10, allow_nan=False), min_size=2, max_size=12
        )
    )
    def test_entropy_monotone_in_temperature(self, logits):
        z = np.array(logits)
        if z.max() - z.min() < 1e-3:
            return
        h = [entropy(nn.softmax(z, t)) for t in (1.0, 2.0, 5.0)]
        assert h[0] < h[1] < h[2]


class TestLosses:
    def test_ce_perfect_one_hot(self):
        t = np.array([0.0, 1.0, 0.0])
        assert nn.loss_cross_entropy(t, t) < 1e-9

    def test_ce_uniform_pair_is_ln2(self):
        assert abs(nn.loss_cross_entropy([0.5, 0.5], [0.5, 0.5]) - math.log(2)) < 1e-15

    def test_ce_one_hot_vs_uniform_is_ln2(self):
        assert abs(nn.loss_cross_entropy([0.5, 0.5], [1.0, 0.0]) - math.log(2)) < 1e-15

    def test_ce_shape_error(self):
        with pytest.raises(ShapeError):
            nn.loss_cross_entropy([0.5, 0.5], [1.0, 0.0, 0.0])

    @given(st.lists(st.floats(min_value=0.001, max_value=1.0), min_size=2, max_size=8))
    def test_ce_at_least_target_entropy(self, raw):
        t = np.array(raw) / np.sum(raw)
        rng = np.random.default_rng(1)
        p = rng.random(t.shape[0]) + 1e-3
        p = p / p.sum()
        assert nn.loss_cross_entropy(p, t) >= entropy(t) - 1e-9

    def test_mse_identity_zero(self):
        x = np.array([0.3, 0.7])
        assert nn.loss_mse(x, x) == 0.0

    def test_mse_unit(self):
        assert nn.loss_mse([0.0, 0.0], [1.0, 1.0]) == 1.0

    def test_mse_hand_value(self):
        assert abs(nn.loss_mse([0.2, 0.4], [0.1, 0.6]) - 0.025) < 1e-15

    def test_mse_shape_error(self):
        with pytest.raises(ShapeError):
            nn.loss_mse([0.0], [1.0, 1.0])


class TestBackward:
    def test_constant_model_symmetric_grads_vanish(self):
        # All-zero weights, identity activation, uniform softmax vs uniform
        # target sits at a stationary point.
        model = nn.init_model([nn.LayerSpec(3, 2, "identity")], 2, 0)
        for layer in model.layers:
            layer.weights[:] = 0.0
        grads = nn.backward(model, np.array([0.1, 0.2, 0.3]), np.array([0.5, 0.5]), 1.0, "ce")
        assert np.abs(grads.weight_grads[0]).max() < 1e-12
        assert np.abs(grads.bias_grads[0]).max() < 1e-12

    def test_matches_finite_differences_small_models(self):
        rng = np.random.default_rng(42)
        for trial in range(10):
            dims = [int(rng.integers(1, 9)) for _ in range(3)]
            acts = [
                nn.ACTIVATIONS[int(rng.integers(0, 3))],
                nn.ACTIVATIONS[int(rng.integers(0, 3))],
            ]
            specs = [nn.LayerSpec(dims[0], dims[1], acts[0]), nn.LayerSpec(dims[1], dims[2], acts[1])]
            loss_kind = "ce" if trial % 2 == 0 else "mse"
            classes = dims[2]
            model = nn.init_model(specs, classes, int(rng.integers(0, 2**32)))
            x = rng.normal(size=dims[0])
            t = rng.random(dims[2]) + 0.05
            t = t / t.sum()
            temperature = 5.0 if trial % 3 == 0 else 1.0
            assert compare_grads(model, x, t, temperature, loss_kind) < 1e-4

    def test_closed_form_input_gradient(self):
        # Single linear layer + softmax + CE: dL/dx = (p - y)^T W
        rng = np.random.default_rng(5)
        W = rng.normal(size=(2, 3))
        model = nn.NetworkModel([nn.Layer(W, np.zeros(2), "identity")], 2)
        x = rng.normal(size=3)
        y = np.array([1.0, 0.0])
        p = nn.forward(model, x, 1.0)
        expected = (p - y) @ W
        grads = nn.backward(model, x, y, 1.0, "ce")
        assert np.allclose(grads.input_grad, expected, atol=1e-12)

    def test_batch_input_grads_are_per_example(self):
        model = small_classifier(seed=3)
        X = np.random.default_rng(0).random((4, 4))
        T = nn.one_hot([0, 1, 2, 0], 3)
        batched = nn.backward(model, X, T, 1.0, "ce")
        for i in range(4):
            single = nn.backward(model, X[i], T[i], 1.0, "ce")
            assert np.allclose(batched.input_grad[i], single.input_grad, atol=1e-12)

    def test_ce_requires_softmax_head(self):
        model = nn.init_model([nn.LayerSpec(3, 2, "sigmoid")], 0, 0)
        with pytest.raises(ParameterError):
            nn.backward(model, np.zeros(3), np.zeros(2), 1.0, "ce")


class TestSgdAndTrain:
    def test_zero_learning_rate_keeps_model(self):
        model = small_classifier(seed=9)
        grads = nn.backward(model, np.ones(4), nn.one_hot(1, 3)[0], 1.0, "ce")
        stepped = nn.sgd_step(model, grads, 0.0)
        for la, lb in zip(model.layers, stepped.layers):
            assert np.array_equal(la.weights, lb.weights)

    def test_single_weight_update(self):
        model = nn.NetworkModel([nn.Layer(np.array([[1.0]]), np.zeros(1), "identity")], 0)
        grads = nn.Gradients([np.array([[0.5]])], [np.zeros(1)], np.zeros(1))
        stepped = nn.sgd_step(model, grads, 0.1)
        assert stepped.layers[0].weights[0, 0] == pytest.approx(0.95, abs=1e-15)

    def test_step_on_quadratic_decreases_loss(self):
        # One identity layer trained with MSE is a convex quadratic.
        model = nn.init_model([nn.LayerSpec(2, 2, "identity")], 0, 11)
        x = np.array([0.4, 0.9])
        t = np.array([1.0, 0.0])
        before = nn.mean_loss(model, x, t, 1.0, "mse")
        grads = nn.backward(model, x, t, 1.0, "mse")
        after = nn.mean_loss(nn.sgd_step(model, grads, 0.05), x, t, 1.0, "mse")
        assert after < before

    def test_zero_epochs_noop(self):
        model = small_classifier(seed=1)
        cfg = nn.TrainConfig(learning_rate=0.1, epochs=0, batch_size=4, seed=0)
        trained, history = nn.train(model, np.zeros((3, 4)), nn.one_hot([0, 1, 2], 3), cfg)
        assert history == []
        assert trained is model

    def test_training_is_deterministic(self):
        X = np.random.default_rng(2).random((20, 4))
        Y = nn.one_hot(np.arange(20) % 3, 3)
        cfg = nn.TrainConfig(learning_rate=0.1, epochs=5, batch_size=4, seed=77)
        _, h1 = nn.train(small_classifier(seed=1), X, Y, cfg)
        _, h2 = nn.train(small_classifier(seed=1), X, Y, cfg)
        assert [(e.train_loss, e.val_loss) for e in h1] == [
            (e.train_loss, e.val_loss) for e in h2
        ]

    def test_xor_loss_decreases(self):
        X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]] * 8)
        labels = np.array([0, 1, 1, 0] * 8)
        Y = nn.one_hot(labels, 2)
        model = nn.init_model(
            [nn.LayerSpec(2, 8, "sigmoid"), nn.LayerSpec(8, 2, "identity")], 2, 4
        )
        cfg = nn.TrainConfig(learning_rate=0.5, epochs=500, batch_size=8, seed=3)
        _, history = nn.train(model, X, Y, cfg)
        assert history[-1].train_loss < history[0].train_loss

    def test_empty_dataset_rejected(self):
        cfg = nn.TrainConfig(learning_rate=0.1, epochs=1, batch_size=4, seed=0)
        with pytest.raises(DataError):
            nn.train(small_classifier(), np.zeros((0, 4)), np.zeros((0, 3)), cfg)


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        model = small_classifier(seed=123, dims=(5, 7, 4), acts=("sigmoid", "identity"))
        path = tmp_path / "model.txt"
        nn.save_model(model, path, temperature=5.0)
        loaded, temperature = nn.load_model(path)
        assert temperature == 5.0
        assert loaded.output_classes == model.output_classes
        for la, lb in zip(model.layers, loaded.layers):
            assert np.array_equal(la.weights, lb.weights)
            assert np.array_equal(la.bias, lb.bias)
            assert la.activation == lb.activation

    def test_save_load_save_is_stable(self, tmp_path):
        model = small_classifier(seed=5)
        p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
        nn.save_model(model, p1, temperature=2.0)
        loaded, t = nn.load_model(p1)
        nn.save_model(loaded, p2, temperature=t)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("not-a-checkpoint\n")
        with pytest.raises(Exception):
            nn.load_model(path)
