from dataclasses import replace

import numpy as np
import pytest

from riskwave.neuralnet import (
    NetConfig,
    TrainingError,
    gradient_check,
    init_model,
    loss_and_grad,
    model_arrays,
    model_from_arrays,
    predict,
    train,
)


@pytest.fixture
def toy():
    """Ten 2-D points split by the line x0 + x1 = 0."""
    Z = np.array(
        [[1.0, 2.0, 1.5, 2.5, 0.8, -1.0, -2.0, -1.2, -0.7, -2.2],
         [1.0, 0.5, 2.0, 1.5, 1.1, -1.5, -0.4, -1.0, -1.9, -0.8]]
    )
    y = np.array([1, 1, 1, 1, 1, 0, 0, 0, 0, 0])
    return Z, y


def zero_model(k=3, h=2):
    m = init_model(NetConfig(k, h))
    return replace(m, weights_in=np.zeros((h, k)), weights_out=np.zeros(h))


class TestInit:
    def test_deterministic(self):
        a, b = init_model(NetConfig(5, 3, seed=4)), init_model(NetConfig(5, 3, seed=4))
        for name, v in a.params().items():
            assert np.array_equal(v, b.params()[name])

    def test_parameter_count(self):
        assert init_model(NetConfig(1, 1)).n_params == 4

    def test_fan_in_scale(self):
        m = init_model(NetConfig(9, 4, seed=1))
        assert np.abs(m.weights_in).max() <= 1 / 3 and np.abs(m.weights_out).max() <= 1 / 2

    def test_hidden_above_inputs(self):
        with pytest.raises(ValueError):
            NetConfig(3, 4)


class TestPredict:
    def test_zero_model(self):
        assert predict(zero_model(), np.ones(3)) == 0.5

    def test_bounds(self):
        rng = np.random.default_rng(0)
        m = init_model(NetConfig(4, 3, seed=2))
        m = replace(m, weights_out=m.weights_out * 50, bias_out=-3.0)
        Z = rng.standard_normal((4, 1000)) * rng.choice([1, 1e3, 1e8], size=1000)
        p = predict(m, Z)
        assert np.all((p > 0) & (p < 1))

    def test_monotone_in_output_bias(self):
        m = init_model(NetConfig(3, 2, seed=3))
        z = np.array([0.3, -1.0, 2.0])
        outs = [predict(replace(m, bias_out=b), z) for b in np.linspace(-5, 5, 21)]
        assert np.all(np.diff(outs) > 0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            predict(zero_model(), np.ones(4))


class TestGradient:
    @pytest.mark.parametrize("seed", range(20))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        m = init_model(NetConfig(6, 4, seed=seed))
        m = replace(m, bias_in=rng.standard_normal(4) * 0.3, bias_out=float(rng.standard_normal()))
        assert gradient_check(m, rng.standard_normal(6), int(rng.integers(2))) < 1e-4

    def test_saturated_point(self):
        m = init_model(NetConfig(2, 2, seed=0))
        m = replace(m, bias_out=40.0)
        _, g = loss_and_grad(m, np.array([[0.1], [0.2]]), np.array([1.0]))
        assert abs(g["bias_out"]) < 1e-15
        assert gradient_check(m, np.array([0.1, 0.2]), 1) < 1e-4

    def test_detects_corrupted_gradient(self):
        def broken(model, Z, y):
            value, grads = loss_and_grad(model, Z, y)
            grads = dict(grads)
            grads["weights_in"] = grads["weights_in"].copy()
            grads["weights_in"][0, 0] *= -1
            return value, grads

        m = init_model(NetConfig(3, 2, seed=1))
        z = np.array([1.0, -0.5, 0.8])
        assert gradient_check(m, z, 1, gradient=broken) > 1e-2


class TestTrain:
    def test_separable_toy(self, toy):
        Z, y = toy
        m = train(init_model(NetConfig(2, 2, max_epochs=2000, seed=0)), Z, y)
        assert len(m.train_log) <= 2000
        assert np.array_equal((predict(m, Z) > 0.5).astype(int), y)

    def test_small_step_loss_is_monotone(self, toy):
        Z, y = toy
        m = train(init_model(NetConfig(2, 2, learning_rate=0.01, max_epochs=1500, seed=0)), Z, y)
        losses = np.array([t for t, _ in m.train_log])
        assert np.all(np.diff(losses[10:]) <= 1e-9)

    def test_label_flip_mirrors(self, toy):
        Z, y = toy
        cfg = NetConfig(2, 2, max_epochs=300, seed=5)
        a = init_model(cfg)
        b = replace(a, weights_out=-a.weights_out, bias_out=-a.bias_out)
        ta, tb = train(a, Z, y), train(b, Z, 1 - y)
        np.testing.assert_allclose(
            [l for l, _ in ta.train_log], [l for l, _ in tb.train_log], atol=1e-6, rtol=0
        )
        np.testing.assert_allclose(predict(ta, Z), 1 - predict(tb, Z), atol=1e-6)

    def test_one_epoch(self, toy):
        Z, y = toy
        m0 = init_model(NetConfig(2, 2, max_epochs=1, patience=0))
        m1 = train(m0, Z, y, Z[:, [0, 9]], y[[0, 9]])
        assert len(m1.train_log) == 1
        assert not np.array_equal(m1.weights_in, m0.weights_in)

    def test_early_stopping_returns_best(self, toy):
        Z, y = toy
        rng = np.random.default_rng(1)
        Zv = rng.standard_normal((2, 6))
        yv = rng.integers(0, 2, 6)
        m = train(init_model(NetConfig(2, 2, max_epochs=3000, patience=20)), Z, y, Zv, yv)
        vals = [v for _, v in m.train_log]
        assert m.best_epoch == int(np.argmin(vals)) + 1
        assert len(vals) <= m.best_epoch + 20

    def test_deterministic(self, toy):
        Z, y = toy
        cfg = NetConfig(2, 2, max_epochs=400, seed=9)
        a, b = train(init_model(cfg), Z, y), train(init_model(cfg), Z, y)
        for name, v in a.params().items():
            assert np.array_equal(v, b.params()[name])

    def test_single_class(self, toy):
        Z, _ = toy
        with pytest.raises(TrainingError):
            train(init_model(NetConfig(2, 2)), Z, np.ones(10))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_loss_reports_epoch(self, toy):
        Z, y = toy
        with pytest.raises(TrainingError, match="epoch"):
            train(replace(init_model(NetConfig(2, 2)), bias_out=np.inf), Z, y)

    def test_round_trip(self, toy):
        Z, y = toy
        m = train(init_model(NetConfig(2, 2, max_epochs=50)), Z, y)
        back = model_from_arrays(model_arrays(m))
        assert np.array_equal(predict(m, Z), predict(back, Z))
