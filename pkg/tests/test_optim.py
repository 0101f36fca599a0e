import numpy as np
import pytest
from hypothesis import given, strategies as st

from nodereg.checks import gradient_suite
from nodereg.optim import AdamState, adam_step, finite_diff_check, relative_error, sgd_step


def test_adam_zero_gradient():
    p = {"w": np.array([1.0, -2.0])}
    new, s = adam_step(p, {"w": np.zeros(2)}, AdamState(weight_decay=0.0))
    np.testing.assert_array_equal(new["w"], p["w"])
    assert s.t == 1


def test_adam_first_step_by_hand():
    g = np.array([0.5, -3.0, 1e-3])
    st_ = AdamState(lr=0.1, weight_decay=0.0)
    new, s = adam_step({"w": np.zeros(3)}, {"w": g}, st_)
    # m_hat = g, v_hat = g^2 after bias correction at t = 1
    np.testing.assert_allclose(new["w"], -0.1 * g / (np.abs(g) + 1e-8), rtol=1e-12)
    np.testing.assert_allclose(s.m["w"], 0.1 * g)
    np.testing.assert_allclose(s.v["w"], 0.001 * g * g)


def test_adam_weight_decay_joins_gradient():
    p = {"w": np.array([2.0])}
    new, _ = adam_step(p, {"w": np.array([0.0])}, AdamState(lr=0.1, weight_decay=0.5))
    np.testing.assert_allclose(new["w"], [2.0 - 0.1], rtol=1e-8)


def test_adam_deterministic_and_pure():
    rng = np.random.default_rng(0)
    p = {"a": rng.normal(size=(3, 2)), "b": rng.normal(size=2)}
    runs = []
    for _ in range(2):
        params, state = {k: v.copy() for k, v in p.items()}, AdamState()
        for i in range(5):
            grads = {k: np.sin(v + i) for k, v in params.items()}
            params, state = adam_step(params, grads, state)
        runs.append(params)
    for k in p:
        np.testing.assert_array_equal(runs[0][k], runs[1][k])
    state = AdamState()
    adam_step(p, {k: np.ones_like(v) for k, v in p.items()}, state)
    assert state.t == 0 and not state.m


def test_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState())
    with pytest.raises(ValueError):
        sgd_step({"w": np.zeros(2)}, {"v": np.zeros(2)}, 0.1)


def test_sgd_examples():
    p = {"w": np.array([1.0, 2.0])}
    g = {"w": np.array([0.5, -1.0])}
    np.testing.assert_array_equal(sgd_step(p, g, 0.0)["w"], p["w"])
    np.testing.assert_allclose(sgd_step(p, g, 0.1)["w"], [0.95, 2.1])
    zero = {"w": np.zeros(2)}
    np.testing.assert_allclose(sgd_step(p, zero, 0.1, 0.5)["w"], p["w"] * (1 - 0.05))


@given(st.integers(0, 2 ** 32 - 1))
def test_adam_decreases_convex_quadratic(seed):
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(4, 4))
    h = q @ q.T + np.eye(4)
    target = rng.normal(size=4)
    loss = lambda w: 0.5 * (w - target) @ h @ (w - target)
    params, state = {"w": np.zeros(4)}, AdamState(lr=0.05, weight_decay=0.0)
    history = [loss(params["w"])]
    for _ in range(200):
        params, state = adam_step(params, {"w": h @ (params["w"] - target)}, state)
        history.append(loss(params["w"]))
    history = np.array(history)
    assert history[-1] < history[0]
    # once converged, fixed-step Adam jitters at the 1e-8 level; the trailing window
    # must never climb back above the best loss reached before it
    assert history[-20:].max() <= history[:-20].min() + 1e-6 * history[0]


def test_finite_diff_quadratic_is_exact():
    p = np.random.default_rng(0).normal(size=(5, 3))
    assert finite_diff_check(lambda w: (0.5 * np.sum(w * w), w), p) <= 1e-9


def test_finite_diff_flags_wrong_gradient():
    p = np.ones(3)
    assert finite_diff_check(lambda w: (np.sum(w ** 2), w), p) > 0.1


def test_finite_diff_subsamples_large_params():
    calls = []

    def fn(w):
        calls.append(1)
        return 0.5 * np.sum(w * w), w

    finite_diff_check(fn, np.ones(5000), max_coords=10)
    assert len(calls) == 1 + 2 * 10


def test_relative_error_absolute_floor():
    assert relative_error(1e-10, 0.0) == pytest.approx(1e-10)
    assert relative_error(2.0, 1.0) == pytest.approx(0.5)


def test_full_pipeline_gradients():
    res = gradient_suite(instances=5, kinds=("gcn_ce", "gcn_nodereg"))
    for r in res:
        assert r.passed, r.line()
