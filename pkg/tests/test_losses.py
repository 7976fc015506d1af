import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from branchnet.errors import ConfigError, LossInputError, ShapeError
from branchnet.losses import Loss, LossKind, logcosh, loss_gradient, loss_value, sample_gradients, sample_losses

small_residuals = st.floats(1e-6, 1e-2) | st.floats(-1e-2, -1e-6)
large_residuals = st.floats(20.0, 1e6) | st.floats(-1e6, -20.0)

REGRESSION = [
    Loss(LossKind.MSE),
    Loss(LossKind.MAE),
    Loss(LossKind.HUBER),
    Loss(LossKind.HUBER, 0.3),
    Loss(LossKind.LOGCOSH),
]


class TestLogcosh:
    def test_matches_naive_formula_in_safe_range(self):
        x = np.linspace(-20, 20, 801)
        np.testing.assert_allclose(logcosh(x), np.log(np.cosh(x)), rtol=1e-10, atol=1e-15)

    @given(small_residuals)
    def test_small_residual_quadratic(self, x):
        assert abs(float(logcosh(x)) - x * x / 2) <= x ** 4

    def test_zero(self):
        assert logcosh(0.0) == 0.0

    @given(large_residuals)
    def test_large_residual_linear(self, x):
        assert float(logcosh(x)) == pytest.approx(abs(x) - math.log(2), rel=0, abs=1e-9)

    def test_no_overflow_past_710(self):
        assert np.isfinite(logcosh(np.array([800.0, -1e300]))).all()

    def test_single_residual_30(self):
        assert loss_value(Loss(LossKind.LOGCOSH), [0.0], [30.0]) == pytest.approx(30 - math.log(2), abs=1e-6)

    @given(st.floats(-15.0, 15.0))
    def test_gradient_bounded(self, x):
        assert abs(loss_gradient(Loss(LossKind.LOGCOSH), [0.0], [x])[0]) < 1

    def test_gradient_at_zero_and_saturation(self):
        loss = Loss(LossKind.LOGCOSH)
        assert loss_gradient(loss, [1.0], [1.0])[0] == 0.0
        assert loss_gradient(loss, [0.0], [1000.0])[0] == pytest.approx(1.0, abs=1e-9)

    def test_summed_over_outputs(self):
        loss = Loss(LossKind.LOGCOSH)
        y_pred = np.array([0.5, -2.0, 3.0])
        assert loss_value(loss, np.zeros(3), y_pred) == pytest.approx(float(np.sum(np.log(np.cosh(y_pred)))), rel=1e-12)


class TestHuber:
    def test_quadratic_piece(self):
        assert loss_value(Loss(LossKind.HUBER, 1.0), [0.0], [0.5]) == 0.125

    def test_linear_piece(self):
        assert loss_value(Loss(LossKind.HUBER, 1.0), [0.0], [2.0]) == 1.5

    @given(arrays(np.float64, 50, elements=st.floats(-0.99, 0.99)))
    def test_equals_half_square_inside_delta(self, e):
        per_sample = sample_losses(Loss(LossKind.HUBER, 1.0), np.zeros((50, 1)), e[:, None])
        np.testing.assert_allclose(per_sample, 0.5 * e * e, rtol=1e-15, atol=1e-300)

    def test_default_delta(self):
        assert Loss(LossKind.HUBER).delta == 1.0

    def test_delta_positive(self):
        with pytest.raises(ConfigError):
            Loss(LossKind.HUBER, 0.0)

    def test_delta_only_for_huber(self):
        with pytest.raises(ConfigError):
            Loss(LossKind.MSE, 1.0)


class TestValues:
    @pytest.mark.parametrize("loss", REGRESSION, ids=lambda l: f"{l.kind.value}-{l.delta}")
    def test_zero_residual(self, rng, loss):
        y = rng.normal(size=4)
        assert loss_value(loss, y, y.copy()) == 0.0

    @pytest.mark.parametrize("loss", REGRESSION, ids=lambda l: f"{l.kind.value}-{l.delta}")
    def test_positive_for_nonzero_residual(self, rng, loss):
        y = rng.normal(size=4)
        assert loss_value(loss, y, y + rng.normal(size=4)) > 0

    def test_mse_and_mae(self):
        assert loss_value(Loss(LossKind.MSE), [0.0, 0.0], [1.0, 3.0]) == 5.0
        assert loss_value(Loss(LossKind.MAE), [0.0, 0.0], [1.0, -3.0]) == 2.0

    def test_cross_entropy(self):
        assert loss_value(Loss(LossKind.CROSS_ENTROPY), [0, 1, 0], [0.2, 0.5, 0.3]) == pytest.approx(-math.log(0.5))

    def test_cross_entropy_zero_probability(self):
        with pytest.raises(LossInputError):
            loss_value(Loss(LossKind.CROSS_ENTROPY), [0, 1], [1.0, 0.0])

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            loss_value(Loss(LossKind.MSE), [1.0, 2.0], [1.0])

    def test_batch_matches_single(self, rng):
        loss = Loss(LossKind.LOGCOSH)
        y = rng.normal(size=(6, 3))
        y_pred = rng.normal(size=(6, 3))
        batch = sample_losses(loss, y, y_pred)
        np.testing.assert_array_equal(batch, [loss_value(loss, y[i], y_pred[i]) for i in range(6)])


class TestGradients:
    @staticmethod
    def numeric(loss, y, y_pred, h=1e-6):
        grad = np.zeros_like(y_pred)
        for i in range(len(y_pred)):
            up, down = y_pred.copy(), y_pred.copy()
            up[i] += h
            down[i] -= h
            grad[i] = (loss_value(loss, y, up) - loss_value(loss, y, down)) / (2 * h)
        return grad

    @pytest.mark.parametrize("loss", REGRESSION, ids=lambda l: f"{l.kind.value}-{l.delta}")
    @given(
        y=arrays(np.float64, 5, elements=st.floats(-3.0, 3.0)),
        # MAE is not differentiable at a zero residual
        e=arrays(np.float64, 5, elements=st.floats(-3.0, 3.0).filter(lambda v: abs(v) > 1e-3)),
    )
    def test_finite_differences(self, loss, y, e):
        y_pred = y + e
        np.testing.assert_allclose(loss_gradient(loss, y, y_pred), self.numeric(loss, y, y_pred), atol=1e-5)

    def test_cross_entropy_finite_differences(self, rng):
        loss = Loss(LossKind.CROSS_ENTROPY)
        for _ in range(10):
            y = np.eye(4)[rng.integers(4)]
            y_pred = rng.dirichlet(np.ones(4)) + 0.05
            np.testing.assert_allclose(loss_gradient(loss, y, y_pred), self.numeric(loss, y, y_pred), atol=1e-5)

    def test_mae_zero_residual_subgradient(self):
        np.testing.assert_array_equal(loss_gradient(Loss(LossKind.MAE), [1.0, 2.0], [1.0, 3.0]), [0.0, 0.5])

    def test_batch_shape(self, rng):
        y = rng.normal(size=(7, 2))
        assert sample_gradients(Loss(LossKind.MSE), y, y + 1).shape == (7, 2)


class TestParse:
    @pytest.mark.parametrize("text, expected", [
        ("mse", Loss(LossKind.MSE)),
        ("LogCosh", Loss(LossKind.LOGCOSH)),
        ("huber:2.5", Loss(LossKind.HUBER, 2.5)),
        ("cross-entropy", Loss(LossKind.CROSS_ENTROPY)),
    ])
    def test_parse(self, text, expected):
        assert Loss.parse(text) == expected

    def test_unknown(self):
        with pytest.raises(ConfigError):
            Loss.parse("pinball")
