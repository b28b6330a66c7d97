"""Adaptive multi-mode Kalman filter (AMM-KF) for inputs from a finite set.

A single filter compensates the state with the weight-averaged input
sum_i w_i N_i. Weights follow Bayes' rule with the mode-conditioned
innovation likelihood N(y~; C G N_i, S).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp, ndtr

from .errors import AllZeroLikelihoodWarning, DegenerateSeparationWarning
from .lti_system import SystemModel
from .rkf import (GaussianBelief, Innovation, innovation, kalman_update,
                  predict, spd_inverse, symmetrize)

WEIGHT_FLOOR = 1e-6
LOCK_SHARE = 0.9
WINDOW_LEN = 50


class ModeSet:
    """Ordered, pairwise-distinct candidate input values (at least two)."""

    def __init__(self, modes):
        arr = np.array([np.atleast_1d(np.asarray(md, dtype=float)) for md in modes])
        if arr.ndim != 2 or arr.shape[0] < 2:
            raise ValueError("need at least two modes of equal dimension")
        for i in range(len(arr)):
            for j in range(i):
                if np.array_equal(arr[i], arr[j]):
                    raise ValueError(f"modes {j} and {i} are identical")
        arr.setflags(write=False)
        self.modes = arr

    def __len__(self):
        return self.modes.shape[0]

    def __getitem__(self, i):
        return self.modes[i]

    def __iter__(self):
        return iter(self.modes)

    @property
    def dim(self) -> int:
        return self.modes.shape[1]


@dataclass(frozen=True)
class ModeWeights:
    weights: np.ndarray
    floor: float = WEIGHT_FLOOR

    @classmethod
    def uniform(cls, n: int, floor: float = WEIGHT_FLOOR) -> "ModeWeights":
        return cls(np.full(n, 1.0 / n), floor)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if abs(w.sum() - 1.0) > 1e-12 or np.any(w < self.floor * (1 - 1e-12)):
            raise ValueError("weights must sum to one and respect the floor")
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class DecisionState:
    locked: int | None = None
    history: tuple = ()
    window_len: int = WINDOW_LEN


def apply_floor(p: np.ndarray, floor: float) -> np.ndarray:
    """Raise entries below ``floor`` to it and rescale the rest to keep sum 1."""
    p = np.asarray(p, dtype=float)
    if floor <= 0:
        return p / p.sum()
    if floor * p.size > 1:
        raise ValueError("floor too large for the number of modes")
    low = np.zeros(p.size, dtype=bool)
    while True:
        new_low = low | (p < floor)
        free = ~new_low
        q = np.empty_like(p)
        q[new_low] = floor
        q[free] = p[free] * (1.0 - floor * new_low.sum()) / p[free].sum()
        if np.array_equal(new_low, low) or not np.any(q[free] < floor):
            return q
        low, p = new_low, q


def mode_log_likelihoods(innov: Innovation, model: SystemModel, modes: ModeSet, k: int = 1) -> np.ndarray:
    """log N(y~; C G N_i, S) for every mode."""
    CG = model.C_at(k) @ model.G_at(k - 1)
    S_inv = innov.S_inv
    _, logdet = np.linalg.slogdet(innov.cov)
    p = innov.value.shape[0]
    resid = innov.value[None, :] - modes.modes @ CG.T
    maha = np.einsum("ij,jk,ik->i", resid, S_inv, resid)
    return -0.5 * (maha + logdet + p * np.log(2.0 * np.pi))


def mode_likelihood(innov: Innovation, model: SystemModel, mode, k: int = 1) -> float:
    """Density of the innovation under input ``mode``."""
    mode = np.atleast_1d(np.asarray(mode, dtype=float))
    CG = model.C_at(k) @ model.G_at(k - 1)
    resid = innov.value - CG @ mode
    _, logdet = np.linalg.slogdet(innov.cov)
    p = resid.shape[0]
    return float(np.exp(-0.5 * (resid @ innov.S_inv @ resid + logdet + p * np.log(2.0 * np.pi))))


def update_weights(w: ModeWeights, likelihoods) -> ModeWeights:
    """w_i <- w_i L_i / sum_j w_j L_j, then floored and renormalized."""
    L = np.asarray(likelihoods, dtype=float)
    if np.any(L < 0):
        raise ValueError("likelihoods must be non-negative")
    post = w.weights * L
    total = post.sum()
    if total <= 0:
        warnings.warn("all mode likelihoods are zero; use log-space weights",
                      AllZeroLikelihoodWarning, stacklevel=2)
        return w
    return ModeWeights(apply_floor(post / total, w.floor), w.floor)


def update_weights_log(w: ModeWeights, log_likelihoods) -> ModeWeights:
    """Same as ``update_weights`` but stable for underflowing densities."""
    a = np.log(w.weights) + np.asarray(log_likelihoods, dtype=float)
    return ModeWeights(apply_floor(np.exp(a - logsumexp(a)), w.floor), w.floor)


def decide_input(w: ModeWeights, likelihoods, dec: DecisionState, modes: ModeSet):
    """Hard decision for this step plus the lock rule.

    The per-step decision is the mode of largest likelihood (ties go to the
    lowest index). The argmax of the weights is appended to a sliding window;
    once the window is full and one mode holds at least 90% of it, the
    decision locks to that mode until the share drops below 90%.

    Returns ``(d, new_state)``.
    """
    step_choice = int(np.argmax(likelihoods))
    hist = (dec.history + (int(np.argmax(w.weights)),))[-dec.window_len:]
    locked = None
    if len(hist) == dec.window_len:
        counts = np.bincount(hist, minlength=len(modes))
        top = int(np.argmax(counts))
        if counts[top] >= LOCK_SHARE * dec.window_len:
            locked = top
    new = replace(dec, locked=locked, history=hist)
    return modes[locked if locked is not None else step_choice], new


def amm_update_state(belief: GaussianBelief, y, model: SystemModel, modes: ModeSet,
                     w: ModeWeights) -> GaussianBelief:
    """Blind KF correction plus the soft-decision input compensation.

    x = A x + K (y - C A x) + (I - K C) G sum_i w_i N_i. The covariance is the
    single-filter Joseph form; ``amm_step`` replaces it with the mixture.
    """
    k = belief.k + 1
    x_pred, P_pred = predict(belief, model)
    innov = innovation(y, x_pred, P_pred, model, k)
    return _compensate(x_pred, P_pred, innov, model, k, w.weights @ modes.modes)


def _compensate(x_pred, P_pred, innov, model, k, d):
    x, P, K = kalman_update(x_pred, P_pred, innov, model, k)
    n = x.shape[0]
    shift = (np.eye(n) - K @ model.C_at(k)) @ model.G_at(k - 1)
    return GaussianBelief(x + shift @ d, P, k)


def mixed_covariance(sub_covs, sub_means, mixed_mean, w) -> np.ndarray:
    """P = sum_i w_i [P_i + e_i e_i^T] with e_i = mixed_mean - mean_i."""
    weights = w.weights if isinstance(w, ModeWeights) else np.asarray(w, dtype=float)
    P = np.zeros_like(np.asarray(sub_covs[0], dtype=float))
    for wi, Pi, xi in zip(weights, sub_covs, sub_means):
        e = mixed_mean - xi
        P += wi * (Pi + np.outer(e, e))
    return symmetrize(P)


def amm_step(belief: GaussianBelief, y, model: SystemModel, modes: ModeSet,
             w: ModeWeights, dec: DecisionState):
    """One AMM-KF step.

    predict -> innovation -> mode likelihoods -> weights -> decision ->
    compensated state -> mixture covariance.

    Returns ``(belief, weights, decision_state, d)``.
    """
    k = belief.k + 1
    x_pred, P_pred = predict(belief, model)
    innov = innovation(y, x_pred, P_pred, model, k)
    loglik = mode_log_likelihoods(innov, model, modes, k)
    w = update_weights_log(w, loglik)
    d, dec = decide_input(w, loglik, dec, modes)
    x_kf, P_kf, K = kalman_update(x_pred, P_pred, innov, model, k)
    shift = (np.eye(x_kf.shape[0]) - K @ model.C_at(k)) @ model.G_at(k - 1)
    sub_means = [x_kf + shift @ md for md in modes]
    mean = x_kf + shift @ (w.weights @ modes.modes)
    P = mixed_covariance([P_kf] * len(modes), sub_means, mean, w)
    return GaussianBelief(mean, P, k), w, dec, d


def detection_probability(mode_a: float, mode_b: float, sigma_a: float, sigma_b: float) -> float:
    """Probability that a single likelihood comparison picks the true mode ``a``.

    This is the mass of N(mode_a, sigma_a^2) on the set where its density
    exceeds that of N(mode_b, sigma_b^2). Equal variances give the one-sided
    tail beyond the midpoint, Phi(|mode_a - mode_b| / (2 sigma)); unequal
    variances give an interval (or its complement) between the two
    equal-density points.
    """
    if sigma_a <= 0 or sigma_b <= 0:
        raise ValueError("standard deviations must be positive")
    if mode_a == mode_b and sigma_a == sigma_b:
        warnings.warn("identical hypotheses", DegenerateSeparationWarning, stacklevel=2)
        return 0.5
    roots = density_crossings(mode_a, mode_b, sigma_a, sigma_b)
    z = [(r - mode_a) / sigma_a for r in roots]
    if len(z) == 1:
        # mode_a's side is the one away from mode_b
        return float(ndtr(z[0]) if mode_a < mode_b else ndtr(-z[0]))
    inner = ndtr(z[1]) - ndtr(z[0])
    return float(inner if sigma_a < sigma_b else 1.0 - inner)


def density_crossings(mu_a, mu_b, s_a, s_b) -> list:
    """Sorted points where N(mu_a, s_a^2) and N(mu_b, s_b^2) have equal density.

    One point (the midpoint) for equal variances, otherwise two.
    """
    if s_a == s_b:
        return [0.5 * (mu_a + mu_b)]
    # log N_a - log N_b = 0  ->  a x^2 + b x + c = 0
    va, vb = s_a * s_a, s_b * s_b
    a = 1.0 / vb - 1.0 / va
    b = 2.0 * (mu_a / va - mu_b / vb)
    c = mu_b * mu_b / vb - mu_a * mu_a / va + 2.0 * np.log(s_b / s_a)
    # unequal variances always cross twice, so the discriminant is positive
    sq = np.sqrt(max(b * b - 4.0 * a * c, 0.0))
    # numerically stable pair of roots
    qq = -0.5 * (b + np.copysign(sq, b))
    return sorted([qq / a, c / qq])


def separation_pd(CG, S, mode_a, mode_b) -> float:
    """Detection probability for two modes with shared innovation covariance S.

    Projects onto the S-whitened mode-difference direction, giving
    Phi(d / 2) with d^2 = (CG dN)^T S^-1 (CG dN).
    """
    delta = CG @ (np.atleast_1d(mode_a) - np.atleast_1d(mode_b))
    d = float(np.sqrt(delta @ spd_inverse(np.atleast_2d(S)) @ delta))
    if d == 0:
        warnings.warn("identical hypotheses", DegenerateSeparationWarning, stacklevel=2)
        return 0.5
    return float(ndtr(0.5 * d))
