import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from stackvaeg import nn


def test_linear_identity_and_scalar():
    layer = nn.LinearLayer(np.eye(2), np.zeros(2))
    assert np.array_equal(nn.linear_forward(layer, np.array([3.0, -1.0])), [3.0, -1.0])
    layer = nn.LinearLayer(np.array([[2.0]]), np.array([1.0]))
    assert nn.linear_forward(layer, np.array([3.0]))[0] == 7.0


def test_linear_matches_triple_loop():
    rng = np.random.default_rng(3)
    W, b, x = rng.normal(size=(4, 3)), rng.normal(size=4), rng.normal(size=3)
    expected = [b[i] + sum(W[i, j] * x[j] for j in range(3)) for i in range(4)]
    got = nn.linear_forward(nn.LinearLayer(W, b), x)
    np.testing.assert_allclose(got, expected, rtol=0, atol=1e-15)
    # row convention on the last axis agrees
    np.testing.assert_allclose(nn.LinearLayer(W, b).forward(x[None])[0], got, atol=1e-15)


def test_linear_shape_error():
    with pytest.raises(nn.ShapeError):
        nn.linear_forward(nn.LinearLayer(np.eye(2), np.zeros(2)), np.ones(3))


def test_activation_values():
    assert nn.softplus(np.array(0.0)) == pytest.approx(np.log(2.0), abs=1e-15)
    assert nn.relu(np.array(-5.0)) == 0.0 and nn.relu(np.array(5.0)) == 5.0
    # log(1 + e^100) = 100 + log1p(e^-100), the correction is ~4e-44
    assert abs(nn.softplus(np.array(100.0)) - 100.0) < 1e-12


@given(st.floats(-700, 700))
def test_softplus_positive_and_above_identity(x):
    v = float(nn.softplus(np.array(x)))
    assert v > 0
    assert v >= x


def test_softplus_chain_derivative():
    # d/dx softplus(2x) = 2 sigmoid(2x)
    x, h = 1.0, 1e-6
    num = (nn.softplus(np.array(2 * (x + h))) - nn.softplus(np.array(2 * (x - h)))) / (2 * h)
    assert float(2 * nn.sigmoid(np.array(2.0))) == pytest.approx(1.761594, abs=1e-6)
    assert float(num) == pytest.approx(1.761594, abs=1e-6)


def test_gradient_zero_at_minimum():
    layer = nn.LinearLayer(np.eye(3), np.zeros(3))
    x = np.array([0.3, -1.2, 2.0])
    layer.zero_grad()
    out = layer.forward(x[None])
    layer.backward(x[None], out - x[None])
    assert not layer.grad_weight.any() and not layer.grad_bias.any()


def _quadratic(params):
    A = np.array([[3.0, 1.0], [1.0, 2.0]])

    def f():
        w = params["w"]
        return 0.5 * w @ A @ w + w.sum(), {"w": A @ w + 1.0}
    return f


def test_gradient_check_quadratic():
    params = {"w": np.array([0.7, -1.3])}
    res = nn.gradient_check(_quadratic(params), params)
    assert res.max_rel_error < 1e-8


def test_gradient_check_rejects_zero_step():
    params = {"w": np.zeros(2)}
    with pytest.raises(ValueError):
        nn.gradient_check(_quadratic(params), params, h=0)


def test_linear_backward_finite_difference():
    rng = np.random.default_rng(0)
    layer = nn.LinearLayer.init(rng, 5, 3)
    layer.bias[:] = rng.normal(size=3)
    x = rng.normal(size=(4, 5))
    target = rng.normal(size=(4, 3))
    params = {"weight": layer.weight, "bias": layer.bias}

    def f():
        layer.zero_grad()
        y = np.tanh(layer.forward(x))
        g = (y - target) * (1 - y * y)
        layer.backward(x, g)
        return 0.5 * ((y - target) ** 2).sum(), {"weight": layer.grad_weight, "bias": layer.grad_bias}
    assert nn.gradient_check(f, params).max_rel_error < 1e-6


def test_adam_fixed_point_and_one_step():
    hyper = nn.TrainHyper(weight_decay=0.0)
    p = {"p": np.array([0.5, -2.0])}
    state = nn.AdamState.for_params(p)
    nn.adam_step(p, {"p": np.zeros(2)}, state, hyper)
    assert np.array_equal(p["p"], [0.5, -2.0])

    p = {"p": np.array([0.0])}
    state = nn.AdamState.for_params(p)
    nn.adam_step(p, {"p": np.array([1.0])}, state, hyper, lr=1e-3)
    assert p["p"][0] == pytest.approx(-1e-3, rel=1e-6)
    assert state.step_count == 1


def test_adam_clips_elementwise():
    hyper = nn.TrainHyper(weight_decay=0.0)
    p = {"p": np.zeros(2)}
    state = nn.AdamState.for_params(p)
    nn.adam_step(p, {"p": np.array([20.0, 3.0])}, state, hyper)
    np.testing.assert_allclose(state.first_moment["p"], 0.1 * np.array([12.0, 3.0]))
    assert (state.second_moment["p"] >= 0).all()


def test_adam_decoupled_weight_decay():
    hyper = nn.TrainHyper(weight_decay=0.1)
    p = {"p": np.array([2.0])}
    state = nn.AdamState.for_params(p)
    nn.adam_step(p, {"p": np.zeros(1)}, state, hyper, lr=0.5)
    # zero gradient leaves only the decay: 2 - 0.5 * 0.1 * 2
    assert p["p"][0] == pytest.approx(1.9)


def test_adam_errors():
    hyper = nn.TrainHyper()
    p = {"p": np.zeros(2)}
    state = nn.AdamState.for_params(p)
    with pytest.raises(nn.ShapeError):
        nn.adam_step(p, {"p": np.zeros(3)}, state, hyper)
    with pytest.raises(FloatingPointError, match="index"):
        nn.adam_step(p, {"p": np.array([0.0, np.nan])}, state, hyper)
    assert state.step_count == 0


def test_adam_deterministic():
    def run():
        rng = np.random.default_rng(11)
        p = {"w": rng.normal(size=(3, 4))}
        state = nn.AdamState.for_params(p)
        for _ in range(25):
            nn.adam_step(p, {"w": rng.normal(size=(3, 4)) * 30}, state, nn.TrainHyper())
        return p["w"].tobytes()
    assert run() == run()


def test_train_hyper_defaults_and_schedule():
    h = nn.TrainHyper()
    assert (h.learning_rate, h.lr_decay, h.weight_decay, h.grad_clip, h.epochs, h.batch_size) == \
        (1e-3, 0.8, 1e-3, 12.0, 256, 64)
    assert h.lr_at(9) == 1e-3
    assert h.lr_at(10) == 1e-3 * 0.8
    assert h.lr_at(25) == 1e-3 * 0.8 ** 2
    with pytest.raises(ValueError):
        nn.TrainHyper(lr_decay=0.0)


@given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-1e6, 1e6)))
def test_clip_idempotent(g):
    once = nn.clip_gradient(g, 12.0)
    assert np.array_equal(nn.clip_gradient(once, 12.0), once)
    assert np.abs(once).max() <= 12.0


def test_glorot_bounds_and_seed():
    a = nn.glorot_uniform(np.random.default_rng(5), 30, 10)
    b = nn.glorot_uniform(np.random.default_rng(5), 30, 10)
    assert a.shape == (10, 30) and np.array_equal(a, b)
    assert np.abs(a).max() <= np.sqrt(6 / 40)
