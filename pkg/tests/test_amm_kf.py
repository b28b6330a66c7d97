import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize, stats

from uikf.amm_kf import (DecisionState, ModeSet, ModeWeights, amm_step, amm_update_state,
                         apply_floor, decide_input, density_crossings, detection_probability,
                         mixed_covariance, mode_likelihood, mode_log_likelihoods,
                         separation_pd, update_weights, update_weights_log)
from uikf.errors import AllZeroLikelihoodWarning, DegenerateSeparationWarning
from uikf.lti_system import simulate
from uikf.rkf import (GaussianBelief, InputEstimate, Innovation, innovation, kf_step_blind,
                      predict, update_state)
from uikf.scenarios import DroneConfig, build_drone, failure_magnitude_for_pd

from conftest import scalar_model

PHI1 = 0.8413447460685429  # standard normal CDF at 1


def run_amm(model, modes, traj, x0, P0, window_len=50):
    belief = GaussianBelief(x0, P0, 0)
    w, dec = ModeWeights.uniform(len(modes)), DecisionState(window_len=window_len)
    W, X = [], []
    for y in traj.measurements:
        belief, w, dec, _ = amm_step(belief, y, model, modes, w, dec)
        W.append(w.weights)
        X.append(belief.mean)
    return np.array(W), np.array(X)


def test_modeset_validation():
    with pytest.raises(ValueError):
        ModeSet([1.0])
    with pytest.raises(ValueError):
        ModeSet([1.0, 1.0])
    assert ModeSet([0.0, 2.0]).dim == 1 and len(ModeSet([[0, 0], [1, 0], [0, 1]])) == 3


def test_likelihood_peak():
    model = scalar_model()
    S = np.array([[2.0]])
    inn = Innovation(np.array([3.0]), S)
    assert mode_likelihood(inn, model, [3.0]) == pytest.approx((2 * np.pi) ** -0.5 * 2.0 ** -0.5, rel=1e-14)


def test_likelihood_symmetry():
    inn = Innovation(np.array([1.0]), np.array([[0.7]]))
    model = scalar_model()
    assert mode_likelihood(inn, model, [0.0]) == pytest.approx(mode_likelihood(inn, model, [2.0]), rel=1e-14)


def test_likelihood_standard_normal():
    inn = Innovation(np.array([1.0]), np.array([[1.0]]))
    assert mode_likelihood(inn, scalar_model(), [0.0]) == pytest.approx(0.24197072451914337, rel=1e-12)


def test_log_likelihood_matches_scipy(rng):
    model, _, modes = build_drone(DroneConfig(failure_magnitude=(0.8,)))
    S = np.array([[0.3, 0.05], [0.05, 0.2]])
    inn = Innovation(rng.standard_normal(2), S)
    ll = mode_log_likelihoods(inn, model, modes)
    CG = model.C_at(1) @ model.G_at(0)
    for i, md in enumerate(modes):
        assert ll[i] == pytest.approx(stats.multivariate_normal(CG @ md, S).logpdf(inn.value), rel=1e-12)


def test_update_weights_examples():
    w = ModeWeights(np.array([0.3, 0.7]))
    np.testing.assert_allclose(update_weights(w, [0.4, 0.4]).weights, [0.3, 0.7], rtol=1e-15)
    out = update_weights(ModeWeights.uniform(2), [0.8, 0.2])
    np.testing.assert_allclose(out.weights, [0.8, 0.2], rtol=1e-15)


def test_update_weights_geometric():
    r = 1.5
    w = ModeWeights.uniform(2)
    for k in range(1, 60):
        w = update_weights(w, [1.0, r])
        expected = r ** k / (1 + r ** k)
        if 1 - expected > 1e-6:
            assert w.weights[1] == pytest.approx(expected, rel=1e-12)
    assert w.weights[1] == pytest.approx(1 - 1e-6, abs=1e-12)


def test_all_zero_likelihood_warns():
    w = ModeWeights.uniform(3)
    with pytest.warns(AllZeroLikelihoodWarning):
        out = update_weights(w, [0.0, 0.0, 0.0])
    assert np.array_equal(out.weights, w.weights)


def test_log_update_survives_underflow():
    w = update_weights_log(ModeWeights.uniform(2), [-2000.0, -2100.0])
    assert w.weights[0] == pytest.approx(1 - 1e-6)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.05, 1.0), min_size=2, max_size=5),
       st.lists(st.floats(1e-3, 10.0), min_size=5, max_size=5))
def test_bayes_update_direct(prior, lik):
    prior = np.array(prior) / np.sum(prior)
    lik = np.array(lik[: prior.size])
    w = ModeWeights(prior, floor=0.0)
    out = update_weights(w, lik)
    direct = prior * lik / np.sum(prior * lik)
    np.testing.assert_allclose(out.weights, direct, rtol=1e-13)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-50.0, 50.0), min_size=2, max_size=6))
def test_simplex_preserved(loglik):
    w = ModeWeights.uniform(len(loglik))
    for _ in range(3):
        w = update_weights_log(w, loglik)
        assert abs(w.weights.sum() - 1.0) < 1e-12
        assert w.weights.min() >= 1e-6 * (1 - 1e-12)


def test_apply_floor_cascade():
    out = apply_floor(np.array([0.999998, 1e-7, 1.9e-6]), 1e-6)
    assert out.min() >= 1e-6 * (1 - 1e-12) and abs(out.sum() - 1) < 1e-15


def test_decide_locks_after_window():
    modes = ModeSet([0.0, 5.0])
    w, dec = ModeWeights.uniform(2), DecisionState(window_len=20)
    for k in range(20):
        w = update_weights(w, [0.9, 0.1])
        d, dec = decide_input(w, [0.9, 0.1], dec, modes)
        assert dec.locked == (0 if k == 19 else None)
    assert d[0] == 0.0


def test_decide_tie_breaks_low_index():
    modes = ModeSet([1.0, 2.0])
    d, _ = decide_input(ModeWeights.uniform(2), [0.5, 0.5], DecisionState(), modes)
    assert d[0] == 1.0


def test_decide_alternating_never_locks():
    modes = ModeSet([0.0, 1.0])
    dec = DecisionState(window_len=50)
    for k in range(200):
        w = ModeWeights(np.array([0.7, 0.3]) if k % 2 else np.array([0.3, 0.7]))
        _, dec = decide_input(w, [0.5, 0.5], dec, modes)
        assert dec.locked is None


def test_zero_mode_is_blind_kf():
    model, _, _ = build_drone(DroneConfig())
    modes = ModeSet([0.0, 1.0])
    b = GaussianBelief(np.array([0.1, -0.2, 0.0, 0.05]), 0.3 * np.eye(4), 0)
    y = np.array([0.3, 0.1])
    out = amm_update_state(b, y, model, modes, ModeWeights(np.array([1.0, 0.0]), floor=0.0))
    ref = kf_step_blind(b, y, model)
    np.testing.assert_array_equal(out.mean, ref.mean)
    np.testing.assert_array_equal(out.cov, ref.cov)


def test_point_mass_equals_rkf_compensation():
    model, _, _ = build_drone(DroneConfig())
    modes = ModeSet([0.0, 0.7])
    b = GaussianBelief(np.zeros(4), 0.2 * np.eye(4), 0)
    y = np.array([0.05, 0.6])
    out = amm_update_state(b, y, model, modes, ModeWeights(np.array([0.0, 1.0]), floor=0.0))
    x_pred, P_pred = predict(b, model)
    inn = innovation(y, x_pred, P_pred, model)
    ref = update_state(x_pred, P_pred, InputEstimate(np.array([0.7]), np.zeros((1, 1)), np.zeros((1, 2))),
                       inn, model)
    np.testing.assert_allclose(out.mean, ref.mean, rtol=1e-15, atol=1e-15)


def test_true_mode_noiseless_zero_error():
    cfg = DroneConfig(q=(0.0, 0.0), r=(1e-12, 1e-12), p0=0.0, collision_step=0)
    model, signal, modes = build_drone(cfg)
    traj = simulate(model.with_noise(R=np.zeros((2, 2))), cfg.x0, signal, 1, seed=0)
    out = amm_update_state(GaussianBelief(cfg.x0, cfg.P0, 0), traj.measurements[0], model, modes,
                           ModeWeights(np.array([0.0, 1.0]), floor=0.0))
    np.testing.assert_allclose(out.mean, traj.states[1], atol=1e-15)


def test_mixed_covariance_examples():
    P1 = np.array([[2.0, 0.3], [0.3, 1.0]])
    x = np.array([1.0, -1.0])
    np.testing.assert_allclose(mixed_covariance([P1, P1], [x, x], x, np.array([0.5, 0.5])), P1)
    np.testing.assert_allclose(mixed_covariance([P1, 5 * P1], [x, x + 1], x, np.array([1.0, 0.0])), P1)
    P = mixed_covariance([np.eye(1), np.eye(1)], [np.array([1.0]), np.array([-1.0])], np.zeros(1),
                         np.array([0.5, 0.5]))
    assert P[0, 0] == 2.0


def test_detection_probability_examples():
    assert detection_probability(0, 2, 1, 1) == pytest.approx(PHI1, abs=1e-12)
    assert detection_probability(2, 0, 1, 1) == pytest.approx(PHI1, abs=1e-12)
    with pytest.warns(DegenerateSeparationWarning):
        assert detection_probability(1.0, 1.0, 1, 1) == 0.5


def _pd_quadrature(a, b, sa, sb):
    """Mass of N(a, sa^2) where its density beats N(b, sb^2), by root bracketing and quad."""
    f = lambda x: stats.norm.logpdf(x, a, sa) - stats.norm.logpdf(x, b, sb)
    span = 12 * max(sa, sb)
    grid = np.linspace(min(a, b) - span, max(a, b) + span, 20_001)
    vals = f(grid)
    roots = [optimize.brentq(f, grid[i], grid[i + 1], xtol=1e-14)
             for i in np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))]
    edges = [-np.inf] + roots + [np.inf]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (lo + hi) if np.isfinite(lo) and np.isfinite(hi) else (hi - 1 if np.isfinite(hi) else lo + 1)
        if f(mid) > 0:
            total += integrate.quad(lambda x: stats.norm.pdf(x, a, sa), lo, hi, epsabs=1e-13, epsrel=1e-13)[0]
    return total


def test_detection_probability_quadrature():
    rng = np.random.default_rng(47)
    for _ in range(50):
        a, b = rng.uniform(-3, 3, 2)
        sa, sb = rng.uniform(0.3, 2.0, 2)
        assert detection_probability(a, b, sa, sb) == pytest.approx(_pd_quadrature(a, b, sa, sb), abs=1e-6)
    for _ in range(10):
        a, b = rng.uniform(-3, 3, 2)
        s = rng.uniform(0.3, 2.0)
        assert detection_probability(a, b, s, s) == pytest.approx(_pd_quadrature(a, b, s, s), abs=1e-6)


def test_density_crossings_are_equal_density(rng):
    for _ in range(20):
        a, b = rng.uniform(-2, 2, 2)
        sa, sb = rng.uniform(0.5, 1.5, 2)
        for lam in density_crossings(a, b, sa, sb):
            assert stats.norm.logpdf(lam, a, sa) == pytest.approx(stats.norm.logpdf(lam, b, sb), abs=1e-9)


def test_separation_pd_scalar_reduction():
    assert separation_pd(np.array([[1.0]]), np.array([[1.0]]), [0.0], [2.0]) == pytest.approx(PHI1, abs=1e-12)


def test_drone_pd_at_phi1():
    cfg = DroneConfig()
    fm = failure_magnitude_for_pd(cfg, PHI1)
    cfg = DroneConfig(failure_magnitude=(fm,))
    model, _, modes = build_drone(cfg)
    from uikf.scenarios import blind_innovation_cov
    S = blind_innovation_cov(model, cfg.P0, cfg.collision_step)
    assert separation_pd(model.C_at(1) @ model.G_at(0), S, modes[0], modes[1]) == pytest.approx(PHI1, abs=1e-9)


def test_no_failure_weight_converges():
    cfg = DroneConfig(collision_step=100)
    model, signal, modes = build_drone(cfg)
    final = []
    for seed in range(50):
        traj = simulate(model, cfg.x0, signal, cfg.T, seed=seed)
        W, _ = run_amm(model, modes, traj, cfg.x0, cfg.P0)
        final.append(W[-20:, 0].mean())
    assert np.mean(final) > 0.99


def test_failure_weight_crosses_and_stays():
    cfg = DroneConfig()
    model, signal, modes = build_drone(cfg)
    hits = 0
    for seed in range(50):
        traj = simulate(model, cfg.x0, signal, cfg.T, seed=seed)
        W, _ = run_amm(model, modes, traj, cfg.x0, cfg.P0)
        w1 = W[cfg.collision_step:, 1]
        above = np.flatnonzero(w1 > 0.5)
        hits += above.size > 0 and np.all(w1[above[0]:] > 0.5)
    assert hits >= 45


def test_more_noise_slower_convergence():
    fm = (0.8,)
    delays = {}
    for r in (0.05, 0.5):
        cfg = DroneConfig(failure_magnitude=fm, r=(r, r), q=(r, r))
        model, signal, modes = build_drone(cfg)
        d = []
        for seed in range(40):
            traj = simulate(model, cfg.x0, signal, cfg.T, seed=seed)
            W, _ = run_amm(model, modes, traj, cfg.x0, cfg.P0)
            idx = np.flatnonzero(W[cfg.collision_step:, 1] > 0.9)
            d.append(idx[0] if idx.size else cfg.T)
        delays[r] = np.mean(d)
    assert delays[0.5] > delays[0.05]


def test_asymptotic_identification_phi1():
    base = DroneConfig()
    fm = failure_magnitude_for_pd(base, PHI1)
    cfg = DroneConfig(failure_magnitude=(fm,), collision_step=0, T=50)
    model, signal, modes = build_drone(cfg)
    ok = 0
    for seed in range(500):
        traj = simulate(model, cfg.x0, signal, cfg.T, seed=seed)
        W, _ = run_amm(model, modes, traj, cfg.x0, cfg.P0)
        ok += bool(np.any(W[:, 1] > 0.99))
    assert ok >= 0.95 * 500
