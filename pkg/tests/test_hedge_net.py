import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlnn_opt.hedge_net import (JOINT_ADAM, AdamState, GramCache, HedgeLayer, TrainingBatch, TrainingConfig,
                                TrainingError, adam_step, batch_loss, fit_layer, grad_strikes, init_strikes,
                                network_value, ols_weights, payoff_matrix, relabel)


def lstar_fd(spots, targets, strikes, cp, h=1e-6):
    """Central differences of the weight-optimised loss, re-solving OLS at every bump."""
    def lstar(b):
        x = payoff_matrix(spots, b, cp)
        w = np.linalg.pinv(x) @ targets
        r = targets - x @ w
        return 0.5 * r @ r

    g = np.empty(strikes.size)
    for i in range(strikes.size):
        up, dn = strikes.copy(), strikes.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (lstar(up) - lstar(dn)) / (2 * h)
    return g


def relative_error(g, fd, floor=1e-6):
    """Norm-wise relative error; the floor sits well above finite-difference round-off (~1e-12)."""
    return np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), floor)


def random_instance(rng, n=40, h=1e-6):
    p_call, p_put = rng.integers(1, 4), rng.integers(1, 4)
    strikes = np.concatenate((rng.uniform(0.8, 1.2, p_call), rng.uniform(0.8, 1.2, p_put)))
    cp = np.concatenate((np.ones(p_call), -np.ones(p_put)))
    spots = rng.uniform(0.7, 1.3, n)
    # keep every spot at least 10h away from every strike
    while True:
        near = np.abs(spots[:, None] - strikes[None, :]).min(axis=1) < 10 * h
        if not near.any():
            break
        spots[near] = rng.uniform(0.7, 1.3, near.sum())
    targets = np.maximum(1.0 - spots, 0.0) + 0.05 * np.sin(7 * spots) + 0.01 * rng.standard_normal(n)
    return spots, targets, strikes, cp


def test_payoff_matrix_examples():
    assert payoff_matrix([1.0], [1.0], [1])[0, 0] == 0.0
    assert payoff_matrix([1.0], [1.0], [-1])[0, 0] == 0.0
    assert payoff_matrix([1.3], [1.1], [1])[0, 0] == pytest.approx(0.2)
    assert payoff_matrix([1.3], [1.1], [-1])[0, 0] == 0.0


def test_unit_weights_sum_columns():
    rng = np.random.default_rng(0)
    spots = rng.uniform(0.5, 1.5, 30)
    b, cp = np.array([0.9, 1.0, 1.1]), np.array([1, -1, 1])
    layer = HedgeLayer(b, np.ones(3), cp)
    assert np.allclose(network_value(spots, layer), payoff_matrix(spots, b, cp).sum(axis=1))


def test_network_value_examples():
    zero = HedgeLayer(np.array([0.9, 1.1]), np.zeros(2), np.array([1, -1]))
    assert np.all(network_value(np.linspace(0.5, 1.5, 7), zero) == 0)
    single = HedgeLayer(np.array([1.0]), np.array([2.0]), np.array([1]))
    assert network_value(1.5, single) == pytest.approx(1.0)


def test_network_value_matches_rowwise_recomputation():
    rng = np.random.default_rng(1)
    layer = HedgeLayer(rng.uniform(0.8, 1.2, 6), rng.normal(size=6), rng.choice([-1, 1], 6))
    spots = rng.uniform(0.6, 1.4, 50)
    expected = [sum(w * max(c * (s - b), 0.0) for b, w, c in zip(layer.strikes, layer.weights, layer.cp))
                for s in spots]
    assert np.allclose(network_value(spots, layer), expected, atol=1e-14)


def test_init_strikes_examples():
    b, cp = init_strikes(TrainingConfig(p_call=3, p_put=0), 1.0)
    assert np.allclose(b, [0.9, 1.0, 1.1]) and np.all(cp == 1)
    b, _ = init_strikes(TrainingConfig(p_call=1, p_put=0), 1.0)
    assert b == pytest.approx([1.0])
    b, _ = init_strikes(TrainingConfig(p_call=3, p_put=0), 2.0)
    assert np.allclose(b, [1.8, 2.0, 2.2])
    b, cp = init_strikes(TrainingConfig(p_call=2, p_put=3), 1.0)
    assert np.allclose(b, [0.9, 1.1, 0.9, 1.0, 1.1])
    assert cp.tolist() == [1, 1, -1, -1, -1]
    with pytest.raises(ValueError):
        init_strikes(TrainingConfig(p_call=0, p_put=0), 1.0)


def test_ols_recovers_exact_weights():
    rng = np.random.default_rng(2)
    b, cp = np.array([0.85, 0.95, 1.05, 1.15]), np.array([1, 1, -1, -1])
    spots = rng.uniform(0.6, 1.4, 200)
    w0 = np.array([0.5, -1.0, 2.0, 0.3])
    w = ols_weights(TrainingBatch(spots, payoff_matrix(spots, b, cp) @ w0), b, cp)
    assert np.allclose(w, w0, atol=1e-10)


def test_ols_zero_targets():
    b, cp = init_strikes(TrainingConfig(), 1.0)
    spots = np.linspace(0.7, 1.3, 50)
    assert np.all(ols_weights(TrainingBatch(spots, np.zeros(50)), b, cp) == 0)


def test_ols_matches_normal_equations():
    rng = np.random.default_rng(3)
    b, cp = np.array([0.8, 0.9, 1.0, 1.05, 1.2]), np.array([1, -1, 1, -1, 1])
    spots = rng.uniform(0.6, 1.4, 300)
    y = rng.normal(size=300)
    x = payoff_matrix(spots, b, cp)
    expected = np.linalg.solve(x.T @ x, x.T @ y)
    assert np.allclose(ols_weights(TrainingBatch(spots, y), b, cp), expected, rtol=1e-8, atol=1e-10)


def test_ols_rank_deficient_duplicate_strikes():
    b, cp = np.array([1e-8, 1e-8, 1.0]), np.array([-1, -1, -1])
    spots = np.linspace(0.5, 1.5, 20)
    w = ols_weights(TrainingBatch(spots, np.maximum(1 - spots, 0)), b, cp)
    assert np.all(np.isfinite(w))
    assert w[2] == pytest.approx(1.0)


def test_ols_residual_orthogonal_and_optimal():
    rng = np.random.default_rng(4)
    b, cp = init_strikes(TrainingConfig(), 1.0)
    spots = np.exp(rng.normal(0, 0.15, 2000))
    y = np.maximum(1 - spots, 0) + 0.01 * rng.normal(size=2000)
    batch = TrainingBatch(spots, y)
    w = ols_weights(batch, b, cp)
    x = payoff_matrix(spots, b, cp)
    res = y - x @ w
    assert np.max(np.abs(x.T @ res)) <= 1e-8 * np.max(np.abs(x.T @ y))
    base = res @ res
    for _ in range(100):
        d = rng.normal(size=w.size)
        d *= 1e-3 / np.linalg.norm(d)
        r2 = y - x @ (w + d)
        assert base <= r2 @ r2 + 1e-15


def test_gram_cache_matches_dense():
    rng = np.random.default_rng(5)
    spots = np.exp(rng.normal(0, 0.2, 5000))
    y = np.maximum(1.05 - spots, 0) + 0.02 * rng.normal(size=5000)
    b = np.concatenate((rng.uniform(0.8, 1.2, 5), rng.uniform(0.8, 1.2, 5)))
    cp = np.array([1] * 5 + [-1] * 5)
    cache = GramCache(spots, y)
    gram, xty = cache.moments(b, cp)
    x = payoff_matrix(spots, b, cp)
    assert np.allclose(gram, x.T @ x, rtol=1e-10, atol=1e-9)
    assert np.allclose(xty, x.T @ y, rtol=1e-10, atol=1e-9)
    w, loss = cache.solve(b, cp)
    w_dense = ols_weights(TrainingBatch(spots, y), b, cp)
    assert np.allclose(x @ w, x @ w_dense, atol=1e-9)
    assert loss == pytest.approx(batch_loss(TrainingBatch(spots, y), HedgeLayer(b, w_dense, cp)) / 5000,
                                 rel=1e-8)


def test_grad_zero_at_zero_residual():
    b, cp = np.array([0.9, 1.1]), np.array([1, -1])
    spots = np.linspace(0.7, 1.3, 11)
    layer = HedgeLayer(b, np.array([1.0, 2.0]), cp)
    batch = TrainingBatch(spots, network_value(spots, layer))
    assert np.allclose(grad_strikes(batch, layer), 0.0)


def test_grad_inactive_node_is_zero():
    layer = HedgeLayer(np.array([1.2]), np.array([1.0]), np.array([1]))
    assert grad_strikes(TrainingBatch(np.array([1.0]), np.array([0.3])), layer)[0] == 0.0


def test_grad_matches_finite_difference():
    rng = np.random.default_rng(6)
    for _ in range(20):
        spots, y, b, cp = random_instance(rng)
        w = ols_weights(TrainingBatch(spots, y), b, cp)
        g = grad_strikes(TrainingBatch(spots, y), HedgeLayer(b, w, cp))
        fd = lstar_fd(spots, y, b, cp)
        assert relative_error(g, fd) <= 1e-4


def hand_adam(b, grads, lr=0.001, b1=0.9, b2=0.99, eps=1e-8, floor=1e-8):
    m = v = 0.0
    out = []
    for step, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh, vh = m / (1 - b1**step), v / (1 - b2**step)
        b = max(b - mh * lr / (vh**0.5 + eps), floor)
        out.append(b)
    return out


def test_adam_zero_gradient_keeps_strikes():
    b = np.array([0.9, 1.1])
    new, state = adam_step(b, np.zeros(2), AdamState.zeros(2), TrainingConfig())
    assert np.array_equal(new, b) and state.step == 1


def test_adam_matches_hand_stepped_reference():
    cfg = TrainingConfig()
    grads = [0.3, 0.3, -0.1, 2.0, 0.0, -5.0]
    b, state = np.array([1.0]), AdamState.zeros(1)
    got = []
    for g in grads:
        b, state = adam_step(b, [g], state, cfg)
        got.append(b[0])
    assert np.allclose(got, hand_adam(1.0, grads), rtol=0, atol=1e-15)
    # first step with a constant gradient moves by ~lr against its sign
    first, _ = adam_step(np.array([1.0]), [0.3], AdamState.zeros(1), cfg)
    assert first[0] == pytest.approx(1.0 - 0.001, abs=1e-10)


def test_adam_floors_strikes():
    new, _ = adam_step(np.array([5e-4]), [1.0], AdamState.zeros(1), TrainingConfig())
    assert new[0] == 1e-8


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20), st.floats(1e-8, 2.0))
def test_adam_strikes_never_below_floor(grads, b0):
    b, state = np.array([b0]), AdamState.zeros(1)
    for g in grads:
        b, state = adam_step(b, [g], state, TrainingConfig())
        assert b[0] >= 1e-8


@pytest.fixture(scope="module")
def synthetic():
    rng = np.random.default_rng(0)
    gen = HedgeLayer(np.array([0.95, 1.04, 0.93, 1.02]), np.array([1.0, -0.5, 0.7, 2.0]),
                     np.array([1, 1, -1, -1]))
    spots = np.exp(rng.normal(0, 0.1, 20_000))
    held_out = np.exp(rng.normal(0, 0.1, 5_000))
    return gen, TrainingBatch(spots, network_value(spots, gen)), held_out


def test_fit_recovers_synthetic_portfolio(synthetic):
    gen, batch, held_out = synthetic
    cfg = TrainingConfig(p_call=2, p_put=2, epochs=20, stop_tol=0.0)
    layer, trace = fit_layer(batch, 1.0, cfg, seed=1)
    rms = np.sqrt(np.mean((network_value(held_out, layer) - network_value(held_out, gen)) ** 2))
    assert rms < 1e-4
    assert np.all(layer.strikes >= 1e-8)
    assert trace.epoch == list(range(21))


def test_hybrid_reaches_threshold_no_later_than_joint(synthetic):
    _, batch, _ = synthetic

    def epochs_to(mode, threshold=1e-6):
        cfg = TrainingConfig(p_call=2, p_put=2, epochs=20, stop_tol=0.0, mode=mode)
        _, trace = fit_layer(batch, 1.0, cfg, seed=1)
        hits = [e for e, l in zip(trace.epoch, trace.loss) if l < threshold]
        return hits[0] if hits else np.inf

    hybrid, joint = epochs_to("hybrid"), epochs_to(JOINT_ADAM)
    assert hybrid <= joint
    assert np.isfinite(hybrid)


def test_zero_epochs_returns_initialisation(synthetic):
    _, batch, _ = synthetic
    cfg = TrainingConfig(p_call=2, p_put=2, epochs=0)
    layer, trace = fit_layer(batch, 1.0, cfg)
    b0, cp0 = init_strikes(cfg, 1.0)
    assert np.array_equal(layer.strikes, b0) and np.array_equal(layer.cp, cp0)
    assert np.allclose(payoff_matrix(batch.spots, b0, cp0) @ layer.weights,
                       payoff_matrix(batch.spots, b0, cp0) @ ols_weights(batch, b0, cp0), atol=1e-9)
    assert trace.epoch == [0]


def test_fit_is_deterministic(synthetic):
    _, batch, _ = synthetic
    cfg = TrainingConfig(p_call=2, p_put=2, epochs=3, stop_tol=0.0)
    a, _ = fit_layer(batch, 1.0, cfg, seed=9)
    b, _ = fit_layer(batch, 1.0, cfg, seed=9)
    assert np.array_equal(a.strikes, b.strikes) and np.array_equal(a.weights, b.weights)


def test_ols_step_never_increases_loss():
    rng = np.random.default_rng(7)
    spots = np.exp(rng.normal(0, 0.15, 3000))
    y = np.maximum(1.0 - spots, 0.0)
    cfg = TrainingConfig()
    b, cp = init_strikes(cfg, 1.0)
    cache = GramCache(spots, y)
    w, loss = cache.solve(b, cp)
    state = AdamState.zeros(b.size)
    for _ in range(50):
        idx = rng.integers(0, spots.size, 256)
        g = grad_strikes(TrainingBatch(spots[idx], y[idx]), HedgeLayer(b, w, cp))
        b, state = adam_step(b, g, state, cfg)
        stale = cache.loss(b, cp, w)
        w, loss = cache.solve(b, cp)
        assert loss <= stale + 1e-15
        assert np.all(b >= 1e-8)


def test_nan_targets_abort():
    spots = np.linspace(0.8, 1.2, 100)
    y = np.full(100, np.nan)
    with pytest.raises(TrainingError):
        fit_layer(TrainingBatch(spots, y), 1.0, TrainingConfig(epochs=1))


def test_empty_training_rejected():
    with pytest.raises(ValueError):
        fit_layer(TrainingBatch(np.array([]), np.array([])), 1.0)


def test_training_config_validation():
    with pytest.raises(ValueError):
        TrainingConfig(moneyness_lo=1.1, moneyness_hi=0.9)
    with pytest.raises(ValueError):
        TrainingConfig(lr=0.0)
    with pytest.raises(ValueError):
        TrainingConfig(mode="sgd")


def test_relabel_preserves_portfolio():
    layer = HedgeLayer(np.array([0.9, 1.0, 1.1]), np.array([1.0, -2.0, 0.5]), np.array([1, -1, 1]))
    spots = np.linspace(0.7, 1.3, 9)
    assert np.allclose(network_value(spots, relabel(layer, [2, 0, 1])), network_value(spots, layer))


def test_trace_csv(tmp_path, synthetic):
    _, batch, _ = synthetic
    _, trace = fit_layer(batch, 1.0, TrainingConfig(p_call=2, p_put=2, epochs=2, stop_tol=0.0))
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    rows = list(csv.DictReader(open(path)))
    assert list(rows[0]) == ["epoch", "iteration", "loss", "wall_ms"]
    assert [int(r["epoch"]) for r in rows] == [0, 1, 2]
