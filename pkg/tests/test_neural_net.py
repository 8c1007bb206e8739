import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from upnet.neural_net import (
    AdamState,
    MlpModel,
    ScaledRegressor,
    TrainConfig,
    adam_step,
    fit,
    fit_scaler,
    forward_mlp,
    init_mlp,
    inverse_transform,
    loss_and_gradient,
    transform,
)


def numeric_gradient(model, x, t, l2, h=1e-6):
    out = []
    params = [p.copy() for p in model.params()]
    for i, p in enumerate(params):
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss_and_gradient(MlpModel(*params), x, t, l2)[0]
            p[idx] = old - h
            down = loss_and_gradient(MlpModel(*params), x, t, l2)[0]
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out


def relative_error(a, b):
    a = np.concatenate([np.ravel(x) for x in a])
    b = np.concatenate([np.ravel(x) for x in b])
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


def random_case(seed):
    rng = np.random.default_rng(seed)
    n, h, nb = rng.integers(1, 5), rng.integers(1, 8), rng.integers(1, 12)
    model = init_mlp((n, h, 1), seed)
    model = MlpModel(model.w1, rng.normal(0, 0.3, h), model.w2, rng.normal(0, 0.3, 1))
    return model, rng.normal(size=(nb, n)), rng.normal(size=nb), float(rng.choice([0.0, 1e-3, 0.1]))


def test_forward_known_values():
    m = MlpModel(np.array([[1.0, -1.0], [2.0, 0.0]]), np.array([0.0, -1.0]),
                 np.array([[1.0, 0.5]]), np.array([0.25]))
    # hidden = relu([1-2, 2*1-1]) = [0, 1]; y = 0.5 + 0.25
    assert forward_mlp(m, [1.0, 2.0]) == 0.75
    np.testing.assert_array_equal(forward_mlp(m, [[1.0, 2.0], [0.0, 0.0]]), [0.75, 0.25])


def test_forward_chunked_matches_direct():
    m = init_mlp((3, 16, 1), 0)
    x = np.random.default_rng(0).normal(size=(10_000, 3))
    direct = np.maximum(x @ m.w1.T + m.b1, 0) @ m.w2[0] + m.b2[0]
    np.testing.assert_allclose(forward_mlp(m, x), direct, rtol=1e-12, atol=1e-12)


def test_rows_independent_of_batch():
    m = init_mlp((5, 32, 1), 2)
    x = np.random.default_rng(1).normal(size=(2500, 5))
    full = forward_mlp(m, x)
    assert all(forward_mlp(m, x[i]) == full[i] for i in range(0, 2500, 7))
    np.testing.assert_array_equal(forward_mlp(m, x[1000:1500]), full[1000:1500])


def test_init_he_uniform():
    m = init_mlp((4, 5000, 1), 7)
    assert np.all(np.abs(m.w1) <= np.sqrt(6 / 4))
    assert np.all(m.b1 == 0) and m.b2[0] == 0
    assert np.var(m.w1) == pytest.approx(2 / 4, rel=0.05)
    assert init_mlp((4, 5, 1), 7).w1.tolist() == init_mlp((4, 5, 1), 7).w1.tolist()


def test_invalid_shapes():
    with pytest.raises(ValueError):
        init_mlp((0, 3, 1), 0)
    with pytest.raises(ValueError):
        init_mlp((2, 3, 2), 0)
    with pytest.raises(ValueError):
        forward_mlp(init_mlp((2, 3, 1), 0), [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        MlpModel(np.zeros((3, 2)), np.zeros(2), np.zeros((1, 3)), np.zeros(1))


@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_finite_difference(seed):
    model, x, t, l2 = random_case(seed)
    _, analytic = loss_and_gradient(model, x, t, l2)
    assert relative_error(analytic, numeric_gradient(model, x, t, l2)) <= 1e-4


def test_l2_excludes_biases():
    model, x, t, _ = random_case(3)
    _, g0 = loss_and_gradient(model, x, t, 0.0)
    _, g1 = loss_and_gradient(model, x, t, 0.5)
    np.testing.assert_array_equal(g0[1], g1[1])
    np.testing.assert_array_equal(g0[3], g1[3])
    np.testing.assert_allclose(g1[0] - g0[0], model.w1, rtol=1e-12)


def test_adam_first_step_moves_by_learning_rate():
    model, x, t, _ = random_case(1)
    _, grads = loss_and_gradient(model, x, t)
    cfg = TrainConfig(learning_rate=0.01)
    new, state = adam_step(model, grads, AdamState.zeros_like(model), cfg)
    assert state.t == 1
    for p, q, g in zip(model.params(), new.params(), grads):
        moved = (p - q)[np.abs(g) > 1e-6]
        np.testing.assert_allclose(moved, 0.01 * np.sign(g[np.abs(g) > 1e-6]), rtol=1e-5)


def test_adam_step_matches_fit_with_full_batch():
    model, x, t, _ = random_case(4)
    cfg = TrainConfig(learning_rate=0.01, batch_size=len(t), epochs=3, l2_coefficient=0.01)
    state, m = AdamState.zeros_like(model), model
    for _ in range(3):
        _, g = loss_and_gradient(m, x, t, cfg.l2_coefficient)
        m, state = adam_step(m, g, state, cfg)
    fitted, _ = fit(model, x, t, cfg)
    for a, b in zip(m.params(), fitted.params()):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


def test_fit_recovers_affine_function():
    x = np.linspace(-1, 1, 400)[:, None]
    cfg = TrainConfig(learning_rate=0.01, batch_size=64, epochs=300, l2_coefficient=0.0, hidden_units=16)
    net, hist = fit(init_mlp((1, 16, 1), 0), x, 2 * x[:, 0] + 1, cfg)
    assert hist.shape == (300,)
    assert hist[-1] < 1e-3 < hist[0]
    assert np.max(np.abs(forward_mlp(net, x) - (2 * x[:, 0] + 1))) < 0.1


def test_fit_nonlinear():
    x = np.linspace(-1, 1, 500)[:, None]
    y = np.sin(3 * x[:, 0])
    cfg = TrainConfig(learning_rate=0.01, batch_size=50, epochs=400, l2_coefficient=0.0, hidden_units=32)
    net, _ = fit(init_mlp((1, 32, 1), 1), x, y, cfg)
    assert np.sqrt(np.mean((forward_mlp(net, x) - y) ** 2)) < 0.05


def test_fit_is_deterministic():
    x = np.random.default_rng(0).normal(size=(300, 2))
    y = x[:, 0] * x[:, 1]
    cfg = TrainConfig(learning_rate=0.01, batch_size=32, epochs=5, hidden_units=8, seed=3)
    a, ha = fit(init_mlp((2, 8, 1), 3), x, y, cfg)
    b, hb = fit(init_mlp((2, 8, 1), 3), x, y, cfg)
    assert all(np.array_equal(p, q) for p, q in zip(a.params(), b.params()))
    assert np.array_equal(ha, hb)


def test_strong_l2_shrinks_weights():
    x = np.random.default_rng(1).normal(size=(200, 2))
    y = x.sum(axis=1)
    weak = fit(init_mlp((2, 8, 1), 0), x, y, TrainConfig(0.01, 50, 100, 0.0, hidden_units=8))[0]
    strong = fit(init_mlp((2, 8, 1), 0), x, y, TrainConfig(0.01, 50, 100, 1.0, hidden_units=8))[0]
    assert np.linalg.norm(strong.w1) < np.linalg.norm(weak.w1)


def test_fit_reports_divergence():
    x = np.ones((4, 1)) * 1e200
    with pytest.raises(FloatingPointError, match="epoch 0"):
        with np.errstate(all="ignore"):
            fit(init_mlp((1, 2, 1), 0), x, np.ones(4) * 1e200, TrainConfig(epochs=2, batch_size=4))


def test_fit_input_validation():
    with pytest.raises(ValueError):
        fit(init_mlp((1, 2, 1), 0), np.empty((0, 1)), np.empty(0), TrainConfig())
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(l2_coefficient=-1)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(1, 4)),
              elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_scaler_round_trip(values):
    s = fit_scaler(values)
    back = inverse_transform(s, transform(s, values))
    np.testing.assert_allclose(back, values, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(values).max()))


def test_scaler_constant_column_floor():
    s = fit_scaler(np.ones((5, 1)))
    assert np.all(np.isfinite(transform(s, np.ones((5, 1)))))
    with pytest.raises(ValueError):
        fit_scaler(np.empty((0, 2)))


def test_scaled_regressor_round_trip():
    x = np.random.default_rng(2).normal(size=(200, 3))
    reg = ScaledRegressor.train(x, 5 + 2 * x[:, 0], TrainConfig(0.01, 50, 3, hidden_units=4),
                                y_offset=5.0, y_scale=2.0)
    back = ScaledRegressor.from_dict(reg.to_dict())
    np.testing.assert_array_equal(back(x), reg(x))
    np.testing.assert_array_equal(reg(x), reg.raw(x) * 2.0 + 5.0)


def test_fit_leaves_no_subnormal_weights():
    # a dead unit whose weights already decayed into the subnormal range
    m = init_mlp((2, 4, 1), 0)
    w1, b1, w2 = m.w1.copy(), m.b1.copy(), m.w2.copy()
    w1[0], b1[0], w2[0, 0] = 1e-320, -100.0, 1e-320
    x = np.random.default_rng(3).normal(size=(64, 2))
    net, _ = fit(MlpModel(w1, b1, w2, m.b2), x, x[:, 0], TrainConfig(0.01, 64, 2, 0.1, hidden_units=4))
    for p in net.params():
        a = np.abs(p)
        assert not np.any((a > 0) & (a < np.finfo(float).tiny))
