"""Box-constrained input gain via the augmented Lagrangian method (AL-RKF).

For each step the input gain M (m x p) solves

    min  tr(M S M^T)
    s.t. M CG = I_m,   lower <= M y~ <= upper

where y~ is the current innovation. When the unconstrained minimum-variance
gain already yields an estimate inside the box it is returned unchanged.
Otherwise multipliers ``mu`` (m x m, equality) and ``lam`` (2m, inequalities)
are updated around an inner minimization of the augmented Lagrangian

    phi(M) = tr(M S M^T) - <mu, h> + sigma/2 |h|^2
             + 1/(2 sigma) sum_i [max(0, lam_i - sigma g_i)^2 - lam_i^2]

with h = M CG - I, g = (M y~ - lower, upper - M y~) and slack variables
eliminated in closed form.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import MaxInnerIterationsWarning, NoConvergence
from .lti_system import SystemModel
from .rkf import (GaussianBelief, InputEstimate, estimate_input, innovation,
                  mvu_gain, predict, update_state)


# relative rounding level of phi; large sigma amplifies cancellation in the penalty terms
_PHI_RTOL = 1e-12


@dataclass(frozen=True)
class BoxConstraint:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("box requires lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def contains(self, d, tol: float = 0.0) -> bool:
        d = np.asarray(d)
        return bool(np.all(d >= self.lower - tol) and np.all(d <= self.upper + tol))

    def clamp(self, d) -> np.ndarray:
        return np.clip(d, self.lower, self.upper)


@dataclass(frozen=True)
class ALParams:
    sigma: float = 1e3
    tol_step: float = 1e-6
    max_outer: int = 500
    max_inner: int = 100
    constraint_tol: float = 1e-6
    inner_tol: float = 1e-11
    # multiply sigma by this factor when feasibility stalls; None keeps it fixed
    sigma_growth: float | None = None
    sigma_max: float = 1e20
    armijo_slope: float = 1e-4
    backtrack: float = 0.5

    def __post_init__(self):
        for name in ("sigma", "tol_step", "constraint_tol", "inner_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration caps must be at least 1")
        if self.sigma_max < self.sigma:
            raise ValueError("sigma_max must be at least sigma")
        if self.sigma_growth is not None and self.sigma_growth <= 1:
            raise ValueError("sigma_growth must exceed 1")


@dataclass(frozen=True)
class ALState:
    M: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    outer_iter: int = 0
    sigma: float | None = None

    def __post_init__(self):
        if np.any(self.lam < 0):
            raise ValueError("inequality multipliers must be non-negative")


@dataclass
class ALResult:
    gain: np.ndarray
    converged: bool
    iterations: int
    skipped: bool = False
    eq_residual: float = 0.0
    ineq_violation: float = 0.0
    infeasibility: list = field(default_factory=list)

    @property
    def monotone(self) -> bool:
        """True when the outer infeasibility measure never increased."""
        h = np.asarray(self.infeasibility)
        return bool(np.all(np.diff(h) <= 1e-12 * (1 + h[:-1]))) if h.size > 1 else True


def constraint_values(M, CG, y, box: BoxConstraint):
    """Return (h, g) with h = M CG - I and g = (M y - lower, upper - M y) >= 0 when feasible."""
    m = M.shape[0]
    h = M @ CG - np.eye(m)
    My = M @ y
    g = np.concatenate([My - box.lower, box.upper - My])
    return h, g


def al_objective(M, mu, lam, sigma, S, CG, y, box: BoxConstraint) -> float:
    h, g = constraint_values(M, CG, y, box)
    t = np.maximum(0.0, lam - sigma * g)
    return float(np.sum((M @ S) * M) - np.sum(mu * h) + 0.5 * sigma * np.sum(h * h)
                 + (np.sum(t * t) - np.sum(lam * lam)) / (2.0 * sigma))


def al_gradient(M, mu, lam, sigma, S, CG, y, box: BoxConstraint):
    """Gradient of ``al_objective`` in M; the max(0, .) kink takes subgradient 0."""
    m = M.shape[0]
    h, g = constraint_values(M, CG, y, box)
    t = np.maximum(0.0, lam - sigma * g)
    coef = t[m:] - t[:m]
    return 2.0 * M @ S - mu @ CG.T + sigma * h @ CG.T + np.outer(coef, y)


def _active_set(M, lam, sigma, CG, y, box):
    _, g = constraint_values(M, CG, y, box)
    return (lam - sigma * g) > 0


def _newton_direction(M, grad, active, sigma, S, CG, y):
    m = M.shape[0]
    n_active = active[:m].astype(float) + active[m:]
    base = 2.0 * S + sigma * CG @ CG.T
    yy = sigma * np.outer(y, y)
    D = np.empty_like(M)
    for j in range(m):
        D[j] = -np.linalg.solve(base + n_active[j] * yy, grad[j])
    return D


def inner_minimize(state: ALState, params: ALParams, S, CG, y, box: BoxConstraint) -> np.ndarray:
    """Minimize the augmented Lagrangian in M for fixed multipliers.

    The objective is convex and piecewise quadratic, so a semismooth Newton
    direction with Armijo backtracking terminates in a few iterations. If the
    Newton direction is not a descent direction the negative gradient is used.
    Warns with MaxInnerIterationsWarning and returns the best iterate when the
    iteration cap is reached.
    """
    sigma = params.sigma if state.sigma is None else state.sigma
    mu, lam = state.mu, state.lam
    M = state.M.copy()
    f = al_objective(M, mu, lam, sigma, S, CG, y, box)
    grad = al_gradient(M, mu, lam, sigma, S, CG, y, box)
    gtol = params.inner_tol * max(1.0, np.linalg.norm(grad))
    for _ in range(params.max_inner):
        if np.linalg.norm(grad) <= gtol:
            return M
        active = _active_set(M, lam, sigma, CG, y, box)
        D = _newton_direction(M, grad, active, sigma, S, CG, y)
        slope = np.sum(grad * D)
        newton = slope < 0
        noise = _PHI_RTOL * (1.0 + abs(f))
        if newton and (np.linalg.norm(D) <= 1e-12 * (1.0 + np.linalg.norm(M)) or -slope <= noise):
            # remaining decrease is below floating-point resolution of phi
            return M + D
        if not newton:
            D = -grad
            slope = -np.sum(grad * grad)
        alpha = 1.0
        while True:
            M_try = M + alpha * D
            f_try = al_objective(M_try, mu, lam, sigma, S, CG, y, box)
            if f_try <= f + params.armijo_slope * alpha * slope:
                break
            if newton and alpha == 1.0 and f_try - f <= noise:
                # full Newton step changes phi only at rounding level
                return M_try
            alpha *= params.backtrack
            if alpha < 1e-20:
                # no further decrease representable in floating point
                return M
        M, f = M_try, f_try
        if newton and alpha == 1.0 and np.array_equal(active, _active_set(M, lam, sigma, CG, y, box)):
            # full step within one quadratic piece lands on its exact minimizer
            return M
        grad = al_gradient(M, mu, lam, sigma, S, CG, y, box)
    if np.linalg.norm(grad) > gtol:
        warnings.warn("inner minimization reached max_inner", MaxInnerIterationsWarning, stacklevel=2)
    return M


def update_multipliers(state: ALState, params: ALParams, CG, y, box: BoxConstraint) -> ALState:
    """lam <- max(0, lam - sigma g(M)),  mu <- mu - sigma h(M)."""
    sigma = params.sigma if state.sigma is None else state.sigma
    h, g = constraint_values(state.M, CG, y, box)
    return replace(state,
                   lam=np.maximum(0.0, state.lam - sigma * g),
                   mu=state.mu - sigma * h,
                   outer_iter=state.outer_iter + 1)


def _infeasibility(M, CG, y, box):
    h, g = constraint_values(M, CG, y, box)
    return float(np.linalg.norm(h)), float(np.sum(np.maximum(0.0, -g)))


def solve_constrained_gain(S, CG, y, box: BoxConstraint, params: ALParams | None = None,
                           S_inv=None) -> ALResult:
    """Box-constrained minimum-variance input gain.

    Starts from the closed-form unbiased gain M0 and returns it untouched if
    ``M0 @ y`` already lies in the box. Otherwise runs the multiplier loop
    until successive gains differ by less than ``tol_step`` (Frobenius) and
    both constraint residuals are below ``constraint_tol``.

    Raises
    ------
    NoConvergence
        After ``max_outer`` iterations; ``exc.result`` holds the best iterate.
    """
    params = params or ALParams()
    y = np.asarray(y, dtype=float)
    M0 = mvu_gain(CG, S, S_inv)
    if box.contains(M0 @ y):
        return ALResult(M0, True, 0, skipped=True)

    m = M0.shape[0]
    state = ALState(M0, np.zeros((m, m)), np.zeros(2 * m), 0, params.sigma)
    history = []
    best = (np.inf, M0)
    eq_res = ineq = np.inf
    for it in range(1, params.max_outer + 1):
        M_new = inner_minimize(state, params, S, CG, y, box)
        step = np.linalg.norm(M_new - state.M)
        state = update_multipliers(replace(state, M=M_new), params, CG, y, box)
        eq_res, ineq = _infeasibility(M_new, CG, y, box)
        history.append(eq_res + ineq)
        if eq_res + ineq < best[0]:
            best = (eq_res + ineq, M_new)
        if step < params.tol_step and eq_res < params.constraint_tol and ineq < params.constraint_tol:
            return ALResult(M_new, True, it, False, eq_res, ineq, history)
        if (params.sigma_growth is not None and len(history) > 1
                and history[-1] > 0.25 * history[-2]):
            state = replace(state, sigma=min(state.sigma * params.sigma_growth, params.sigma_max))
    eq_res, ineq = _infeasibility(best[1], CG, y, box)
    result = ALResult(best[1], False, params.max_outer, False, eq_res, ineq, history)
    raise NoConvergence(
        f"augmented Lagrangian did not converge in {params.max_outer} iterations "
        f"(|h|={eq_res:.2e}, violation={ineq:.2e})", result)


def al_rkf_step(belief: GaussianBelief, y, model: SystemModel, box: BoxConstraint,
                params: ALParams | None = None):
    """RKF step with the box-constrained input gain. Returns (belief, InputEstimate)."""
    k = belief.k + 1
    x_pred, P_pred = predict(belief, model)
    innov = innovation(y, x_pred, P_pred, model, k)
    CG = model.C_at(k) @ model.G_at(k - 1)
    res = solve_constrained_gain(innov.cov, CG, innov.value, box, params, innov.cov_inv)
    d_hat = estimate_input(res.gain, innov)
    return update_state(x_pred, P_pred, d_hat, innov, model, k), d_hat
