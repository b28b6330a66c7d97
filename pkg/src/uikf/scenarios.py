"""Simulated experiments: airship in a wind field and a drone with an actuator fault.

Both use a planar double integrator with state ``[x, y, vx, vy]`` and
position measurements. Physical constants are declared defaults, not
measured values, and every field can be overridden.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .al_rkf import BoxConstraint
from .amm_kf import ModeSet
from .errors import ConfigError
from .lti_system import SystemModel

POSITION_INDEX = (0, 1)


class StepSignal:
    """Piecewise-constant input: ``before`` for k < onset, ``after`` otherwise."""

    def __init__(self, onset: int, before, after):
        self.onset = int(onset)
        self.before = np.atleast_1d(np.asarray(before, dtype=float))
        self.after = np.atleast_1d(np.asarray(after, dtype=float))

    def __call__(self, k: int) -> np.ndarray:
        return self.before if k < self.onset else self.after

    def values(self, T: int) -> np.ndarray:
        return np.array([self(k) for k in range(T)])


def planar_double_integrator(dt: float):
    A = np.eye(4)
    A[0, 2] = A[1, 3] = dt
    C = np.zeros((2, 4))
    C[0, 0] = C[1, 1] = 1.0
    return A, C


def position_noise(q, q_vel=0.0) -> np.ndarray:
    """Diagonal 4x4 covariance from a 2-vector of position variances."""
    q = np.asarray(q, dtype=float)
    if q.shape != (2,):
        raise ConfigError(f"expected two position variances, got {q.tolist()}")
    return np.diag([q[0], q[1], q_vel, q_vel])


def _check_var(name, vals):
    vals = np.asarray(vals, dtype=float)
    if vals.shape != (2,) or np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise ConfigError(f"{name} must be two non-negative finite numbers")


@dataclass(frozen=True)
class AirshipConfig:
    mass: float = 50.0
    rho: float = 1.225
    area: float = 10.0
    dt: float = 1.0
    wind_speed: float = 8.0
    onset_step: int = 30
    speed_bounds: tuple = (0.0, 10.3)
    T: int = 100
    q: tuple = (0.05, 0.05)
    r: tuple = (0.05, 0.05)
    q_vel: float = 0.0
    cruise_speed: float = 1.0
    p0: float = 1e-2
    seed: int = 0

    def __post_init__(self):
        if self.mass <= 0 or self.rho <= 0 or self.area <= 0:
            raise ConfigError("mass, rho and area must be positive")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.wind_speed < 0:
            raise ConfigError("wind_speed must be non-negative")
        lo, hi = self.speed_bounds
        if lo < 0 or hi < lo:
            raise ConfigError("speed_bounds must be non-negative and ordered")
        if self.T < 1 or not 0 <= self.onset_step <= self.T:
            raise ConfigError("need T >= 1 and 0 <= onset_step <= T")
        _check_var("q", self.q)
        _check_var("r", self.r)
        if np.any(np.asarray(self.r) <= 0):
            raise ConfigError("r must be strictly positive")
        if self.p0 < 0 or self.q_vel < 0:
            raise ConfigError("p0 and q_vel must be non-negative")

    @property
    def x0(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.cruise_speed, 0.0])

    @property
    def P0(self) -> np.ndarray:
        return self.p0 * np.eye(4)


def wind_force(speed, rho, area):
    """Drag-style wind force F = rho * area * v^2."""
    return rho * area * np.square(speed)


def wind_force_to_speed(F, rho, area):
    """Invert F = rho * area * v^2; negative forces map to zero speed."""
    if rho <= 0 or area <= 0:
        raise ValueError("rho and area must be positive")
    return np.sqrt(np.maximum(F, 0.0) / (rho * area))


def build_airship(config: AirshipConfig):
    """Airship in a y-directed wind field.

    The wind force enters through a semi-implicit Euler discretization of
    Newton's law: velocity gains F dt / mass and position gains F dt^2 / mass.

    Returns ``(model, input_signal, box)``; the box is the wind-speed bound
    mapped through the force relation.
    """
    c = config
    A, C = planar_double_integrator(c.dt)
    G = np.array([[0.0], [c.dt ** 2 / c.mass], [0.0], [c.dt / c.mass]])
    model = SystemModel(A, G, C, position_noise(c.q, c.q_vel), np.diag(np.asarray(c.r, float)))
    signal = StepSignal(c.onset_step, 0.0, wind_force(c.wind_speed, c.rho, c.area))
    lo, hi = c.speed_bounds
    box = BoxConstraint([wind_force(lo, c.rho, c.area)], [wind_force(hi, c.rho, c.area)])
    return model, signal, box


@dataclass(frozen=True)
class DroneConfig:
    failure_magnitude: tuple = (1.0,)
    collision_step: int = 30
    T: int = 100
    dt: float = 1.0
    q: tuple = (0.05, 0.05)
    r: tuple = (0.05, 0.05)
    q_vel: float = 0.0
    # the hover start is known exactly; an inflated prior leaks the first
    # compensation transients into velocity estimates that are never corrected
    p0: float = 0.0
    seed: int = 0
    window_len: int = 50

    def __post_init__(self):
        fm = np.atleast_1d(np.asarray(self.failure_magnitude, dtype=float))
        if fm.shape != (1,) or not np.any(fm != 0):
            raise ConfigError("failure_magnitude must be a non-zero 1-vector")
        if self.T < 1 or not 0 <= self.collision_step <= self.T:
            raise ConfigError("need T >= 1 and 0 <= collision_step <= T")
        if self.dt <= 0 or self.window_len < 1:
            raise ConfigError("dt and window_len must be positive")
        if self.p0 < 0 or self.q_vel < 0:
            raise ConfigError("p0 and q_vel must be non-negative")
        _check_var("q", self.q)
        _check_var("r", self.r)
        if np.any(np.asarray(self.r) <= 0):
            raise ConfigError("r must be strictly positive")

    @property
    def x0(self) -> np.ndarray:
        return np.zeros(4)

    @property
    def P0(self) -> np.ndarray:
        return self.p0 * np.eye(4)


def build_drone(config: DroneConfig):
    """Hovering drone whose failed actuator adds a constant y-displacement rate.

    Returns ``(model, input_signal, modes)`` with modes ``{0, failure_magnitude}``.
    """
    c = config
    A, C = planar_double_integrator(c.dt)
    G = np.array([[0.0], [c.dt], [0.0], [0.0]])
    model = SystemModel(A, G, C, position_noise(c.q, c.q_vel), np.diag(np.asarray(c.r, float)))
    fail = np.atleast_1d(np.asarray(c.failure_magnitude, dtype=float))
    signal = StepSignal(c.collision_step, np.zeros_like(fail), fail)
    modes = ModeSet([np.zeros_like(fail), fail])
    return model, signal, modes


def blind_innovation_cov(model: SystemModel, P0, steps: int) -> np.ndarray:
    """Innovation covariance of the input-blind KF after ``steps`` updates."""
    P = np.asarray(P0, dtype=float)
    A, C, Q, R = model.A_at(0), model.C_at(0), model.Q_at(0), model.R_at(0)
    n = P.shape[0]
    S = None
    for _ in range(max(steps, 1)):
        P_pred = A @ P @ A.T + Q
        S = C @ P_pred @ C.T + R
        K = np.linalg.solve(S, C @ P_pred).T
        I_KC = np.eye(n) - K @ C
        P = I_KC @ P_pred @ I_KC.T + K @ R @ K.T
    return S


def failure_magnitude_for_pd(config: DroneConfig, target_pd: float) -> float:
    """Failure size giving a one-step detection probability ``target_pd``.

    Uses the innovation covariance of the blind filter at the collision step
    and the whitened separation rule P_D = Phi(d / 2).
    """
    model, _, _ = build_drone(config)
    S = blind_innovation_cov(model, config.P0, config.collision_step)
    cg = (model.C_at(0) @ model.G_at(0))[:, 0]
    unit_sep = np.sqrt(cg @ np.linalg.solve(S, cg))
    return float(2.0 * ndtri(target_pd) / unit_sep)

