import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uikf.errors import ModelError
from uikf.lti_system import (GaussianNoise, SystemModel, Trajectory, numerical_rank,
                             psd_factor, simulate, step_truth, validate_rank)
from uikf.scenarios import AirshipConfig, build_airship

from conftest import random_model


def _model(C, G, n=2):
    p, m = np.shape(C)[0], np.shape(G)[1]
    return SystemModel(np.eye(n), G, C, np.zeros((n, n)), np.eye(p))


def test_rank_identity_observation():
    assert validate_rank(_model(np.eye(2), [[0.0], [1.0]]))


def test_rank_zero_G():
    rep = validate_rank(_model(np.eye(2), [[0.0], [0.0]]))
    assert not rep
    assert rep.rank_G == 0


def test_rank_unobserved_input_channel():
    rep = validate_rank(_model([[1.0, 0.0]], [[0.0], [1.0]]))
    assert not rep
    assert rep.rank_G == 1 and rep.rank_CG == 0


def test_numerical_rank_tolerance():
    assert numerical_rank(np.diag([1.0, 1e-11])) == 1
    assert numerical_rank(np.diag([1.0, 1e-9])) == 2
    assert numerical_rank(np.zeros((2, 2))) == 0


def test_rank_time_varying_reports_step():
    Gs = np.array([[[0.0], [1.0]], [[0.0], [0.0]], [[0.0], [1.0]]])
    model = SystemModel(np.eye(2), Gs, np.eye(2), np.zeros((2, 2)), np.eye(2))
    rep = validate_rank(model, steps=2)
    assert not rep and rep.step == 1


def test_model_rejects_bad_shapes():
    with pytest.raises(ModelError):
        SystemModel(np.eye(2), np.ones((3, 1)), np.eye(2), np.eye(2), np.eye(2))
    with pytest.raises(ModelError):
        SystemModel(np.eye(2), np.ones((2, 3)), np.eye(2), np.eye(2), np.eye(2))


def test_model_rejects_indefinite_noise():
    with pytest.raises(ModelError):
        SystemModel(np.eye(2), np.ones((2, 1)), np.eye(2), -np.eye(2), np.eye(2))
    with pytest.raises(ModelError):
        SystemModel(np.eye(2), np.ones((2, 1)), np.eye(2), np.eye(2), [[1.0, 0.5], [0.4, 1.0]])


def test_callable_provider():
    model = SystemModel(lambda k: np.eye(2) * (1 + k), [[0.0], [1.0]], np.eye(2), np.zeros((2, 2)), np.eye(2))
    assert model.A_at(3)[0, 0] == 4.0
    assert not model.is_constant


def test_step_truth_zero():
    model = SystemModel(np.eye(2), np.eye(2), np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)))
    x, y = step_truth(model, np.zeros(2), np.zeros(2), np.random.default_rng(0))
    assert np.array_equal(x, np.zeros(2)) and np.array_equal(y, np.zeros(2))


def test_step_truth_noiseless_arithmetic():
    model = SystemModel(np.eye(2), [[0.0], [1.0]], np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)))
    x, y = step_truth(model, [1.0, 1.0], [3.0], np.random.default_rng(0))
    assert np.array_equal(x, [1.0, 4.0]) and np.array_equal(y, [1.0, 4.0])


def test_step_truth_sample_mean():
    Q = np.diag([0.05, 0.05])
    model = SystemModel(np.eye(2), [[0.0], [1.0]], np.eye(2), Q, np.diag([0.05, 0.05]))
    rng = np.random.default_rng(7)
    noise = (GaussianNoise(Q), GaussianNoise(model.R_at(1)))
    N = 100_000
    xs = np.array([step_truth(model, [1.0, 1.0], [3.0], rng, _noise=noise)[0] for _ in range(N)])
    assert np.all(np.abs(xs.mean(axis=0) - [1.0, 4.0]) < 3 * np.sqrt(0.05 / N))


def test_noise_covariance_matches_Q():
    rng = np.random.default_rng(3)
    model = random_model(rng, n=3, m=1, p=2)
    Q = model.Q_at(0)
    noise = (GaussianNoise(Q), GaussianNoise(model.R_at(1)))
    x, d = rng.standard_normal(3), np.array([0.7])
    mean = model.A_at(0) @ x + model.G_at(0) @ d
    W = np.array([step_truth(model, x, d, rng, _noise=noise)[0] - mean for _ in range(20_000)])
    emp = np.cov(W.T, bias=True)
    assert np.linalg.norm(emp - Q) / np.linalg.norm(Q) < 0.05


def test_psd_factor_singular():
    Q = np.diag([0.05, 0.05, 0.0, 0.0])
    F = psd_factor(Q)
    np.testing.assert_allclose(F @ F.T, Q, atol=1e-15)
    with pytest.raises(ModelError):
        psd_factor(np.diag([1.0, -1e-3]))


def test_simulate_T1_is_single_step():
    rng = np.random.default_rng(0)
    model = random_model(rng, n=3, m=1, p=2)
    traj = simulate(model, np.ones(3), lambda k: [0.5], 1, seed=11)
    x, y = step_truth(model, np.ones(3), [0.5], np.random.default_rng(11))
    np.testing.assert_array_equal(traj.states[1], x)
    np.testing.assert_array_equal(traj.measurements[0], y)


def test_simulate_constant_fixed_point():
    model = SystemModel(np.eye(2), [[0.0], [1.0]], np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)))
    traj = simulate(model, [2.0, -1.0], np.zeros((5, 1)), 5, seed=0)
    assert np.all(traj.states == [2.0, -1.0])


def test_simulate_lengths_and_readonly():
    rng = np.random.default_rng(1)
    model = random_model(rng)
    traj = simulate(model, np.zeros(model.n), lambda k: np.zeros(model.m), 7, seed=2)
    assert traj.states.shape[0] == traj.inputs.shape[0] + 1 == traj.measurements.shape[0] + 1
    with pytest.raises(ValueError):
        traj.states[0, 0] = 1.0
    with pytest.raises(ValueError):
        Trajectory(np.zeros((3, 1)), np.zeros((3, 1)), np.zeros((3, 1)), 1.0, None)


def test_airship_noiseless_velocity_constant_before_onset():
    cfg = AirshipConfig(q=(0.0, 0.0), r=(1e-9, 1e-9))
    model, signal, _ = build_airship(cfg)
    traj = simulate(model.with_noise(R=np.zeros((2, 2))), cfg.x0, signal, cfg.T, seed=0)
    vy = traj.states[:, 3]
    assert np.all(vy[: cfg.onset_step + 1] == 0.0)
    # closed-form kinematics: y velocity after onset equals F dt / mass per elapsed step
    F = signal.after[0]
    k = np.arange(cfg.onset_step + 1, cfg.T + 1)
    np.testing.assert_allclose(vy[k], (k - cfg.onset_step) * F * cfg.dt / cfg.mass, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), T=st.integers(1, 30))
def test_simulate_deterministic(seed, T):
    model = random_model(np.random.default_rng(seed % 1000))
    sig = lambda k: np.full(model.m, np.sin(k))
    a = simulate(model, np.ones(model.n), sig, T, seed=seed)
    b = simulate(model, np.ones(model.n), sig, T, seed=seed)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.measurements, b.measurements)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), T=st.integers(1, 20))
def test_noiseless_matches_recursion(seed, T):
    rng = np.random.default_rng(seed)
    model = random_model(rng)
    model = model.with_noise(np.zeros((model.n, model.n)), np.zeros((model.p, model.p)))
    d = rng.standard_normal((T, model.m))
    x0 = rng.standard_normal(model.n)
    traj = simulate(model, x0, d, T, seed=seed)
    x = x0
    for k in range(T):
        x = model.A_at(k) @ x + model.G_at(k) @ d[k]
        np.testing.assert_allclose(traj.states[k + 1], x, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(traj.measurements[k], model.C_at(k + 1) @ x, rtol=1e-12, atol=1e-12)
