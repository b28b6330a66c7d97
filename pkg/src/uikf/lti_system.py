"""Linear time-varying system with an unknown input channel.

The model is

    x[k+1] = A[k] x[k] + G[k] d[k] + w[k],    w ~ N(0, Q[k])
    y[k+1] = C[k+1] x[k+1] + v[k+1],          v ~ N(0, R[k+1])

where ``d`` is the unknown input. Each matrix may be a constant 2-D array,
a stacked 3-D array indexed by step, or a callable ``k -> matrix``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ModelError

RANK_RTOL = 1e-10
PSD_TOL = 1e-10

_NAMES = ("A", "G", "C", "Q", "R")


def _as_provider(value):
    if callable(value):
        return value
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 2:
        arr.setflags(write=False)
        return arr
    if arr.ndim == 3:
        arr.setflags(write=False)
        return arr
    raise ModelError(f"matrix must be 2-D, stacked 3-D or callable, got ndim={arr.ndim}")


@dataclass(frozen=True)
class SystemModel:
    """Matrices (A, G, C, Q, R) of the input-driven linear system.

    Parameters
    ----------
    A : (n, n) array, (T, n, n) array or callable
        State transition.
    G : (n, m) array, (T, n, m) array or callable
        Unknown-input gain.
    C : (p, n) array, (T, p, n) array or callable
        Observation matrix.
    Q : (n, n) array, (T, n, n) array or callable
        Process noise covariance, symmetric PSD.
    R : (p, p) array, (T, p, p) array or callable
        Measurement noise covariance, symmetric PSD. Filtering needs the
        innovation covariance to be PD, which is checked at each update, so a
        zero R is accepted for noiseless truth simulation.
    """

    A: object
    G: object
    C: object
    Q: object
    R: object
    n: int = field(init=False)
    m: int = field(init=False)
    p: int = field(init=False)

    def __post_init__(self):
        for name in _NAMES:
            object.__setattr__(self, name, _as_provider(getattr(self, name)))
        A, G, C = self.A_at(0), self.G_at(0), self.C_at(0)
        n, m = G.shape
        p = C.shape[0]
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "p", p)
        if m > p:
            raise ModelError(f"input dimension m={m} exceeds measurement dimension p={p}")
        self.check(0)

    @property
    def is_constant(self) -> bool:
        return all(isinstance(getattr(self, nm), np.ndarray) and getattr(self, nm).ndim == 2
                   for nm in _NAMES)

    def _get(self, name, k):
        val = getattr(self, name)
        if isinstance(val, np.ndarray):
            if val.ndim == 2:
                return val
            if not 0 <= k < val.shape[0]:
                raise ModelError(f"{name} has no entry for step {k}")
            return val[k]
        return np.asarray(val(k), dtype=float)

    def A_at(self, k: int = 0) -> np.ndarray:
        return self._get("A", k)

    def G_at(self, k: int = 0) -> np.ndarray:
        return self._get("G", k)

    def C_at(self, k: int = 0) -> np.ndarray:
        return self._get("C", k)

    def Q_at(self, k: int = 0) -> np.ndarray:
        return self._get("Q", k)

    def R_at(self, k: int = 0) -> np.ndarray:
        return self._get("R", k)

    def check(self, k: int = 0) -> None:
        """Raise ModelError if the step-``k`` matrices are inconsistent."""
        n, m, p = self.n, self.m, self.p
        expected = {"A": (n, n), "G": (n, m), "C": (p, n), "Q": (n, n), "R": (p, p)}
        for name, shape in expected.items():
            mat = self._get(name, k)
            if mat.shape != shape:
                raise ModelError(f"{name} at step {k} has shape {mat.shape}, expected {shape}")
        for name in ("Q", "R"):
            mat = self._get(name, k)
            if not np.allclose(mat, mat.T, rtol=0, atol=1e-12 * max(1.0, np.abs(mat).max())):
                raise ModelError(f"{name} at step {k} is not symmetric")
        for name in ("Q", "R"):
            eig = np.linalg.eigvalsh(self._get(name, k))
            if eig.min() < -PSD_TOL * max(1.0, eig.max()):
                raise ModelError(f"{name} at step {k} is not positive semidefinite")

    def with_noise(self, Q=None, R=None) -> "SystemModel":
        """Copy of the model with replaced noise covariances."""
        return SystemModel(self.A, self.G, self.C,
                           self.Q if Q is None else Q,
                           self.R if R is None else R)


@dataclass(frozen=True)
class RankReport:
    ok: bool
    step: int | None = None
    rank_CG: int | None = None
    rank_G: int | None = None
    message: str = ""

    def __bool__(self):
        return self.ok


def numerical_rank(mat: np.ndarray, rtol: float = RANK_RTOL) -> int:
    sv = np.linalg.svd(np.atleast_2d(mat), compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


def validate_rank(model: SystemModel, steps: int = 1) -> RankReport:
    """Check rank(C[k+1] G[k]) == rank(G[k]) == m for k in ``range(steps)``.

    Returns a truthy/falsy report naming the first failing step.
    """
    m = model.m
    for k in range(steps):
        G = model.G_at(k)
        CG = model.C_at(k + 1) @ G
        r_g, r_cg = numerical_rank(G), numerical_rank(CG)
        if not (r_g == r_cg == m):
            return RankReport(False, k, r_cg, r_g,
                              f"step {k}: rank(CG)={r_cg}, rank(G)={r_g}, m={m}")
    return RankReport(True, message="rank condition holds")


class GaussianNoise:
    """Zero-mean Gaussian sampler for a fixed PSD covariance.

    Uses a Cholesky factor when possible and falls back to an eigen
    factorization for singular PSD matrices.
    """

    def __init__(self, cov):
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        self.dim = cov.shape[0]
        self.factor = psd_factor(cov)
        self.zero = not np.any(self.factor)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal(self.dim)
        return self.factor @ z


def psd_factor(cov: np.ndarray) -> np.ndarray:
    """Return F with F F^T == cov."""
    if not np.any(cov):
        return np.zeros_like(cov)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() < -PSD_TOL * max(1.0, vals.max()):
        raise ModelError(f"covariance has negative eigenvalue {vals.min():.3e}")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


@dataclass(frozen=True)
class Trajectory:
    """Ground-truth run: states x[0..T], inputs d[0..T-1], measurements y[1..T].

    ``measurements[k]`` is y[k+1], the observation of ``states[k+1]``.
    """

    states: np.ndarray
    inputs: np.ndarray
    measurements: np.ndarray
    dt: float
    seed: int | None

    def __post_init__(self):
        T = self.inputs.shape[0]
        if self.states.shape[0] != T + 1 or self.measurements.shape[0] != T:
            raise ValueError("trajectory lengths must satisfy |x| = |d| + 1 = |y| + 1")
        for arr in (self.states, self.inputs, self.measurements):
            arr.setflags(write=False)

    @property
    def T(self) -> int:
        return self.inputs.shape[0]


def step_truth(model: SystemModel, x, d, rng: np.random.Generator, k: int = 0,
               _noise=None):
    """Propagate the true system one step.

    Returns ``(x_next, y_next)`` with x_next = A x + G d + w and
    y_next = C x_next + v. ``w`` is drawn before ``v``.
    """
    if _noise is None:
        w_src, v_src = GaussianNoise(model.Q_at(k)), GaussianNoise(model.R_at(k + 1))
    else:
        w_src, v_src = _noise
    x = np.asarray(x, dtype=float)
    d = np.atleast_1d(np.asarray(d, dtype=float))
    x_next = model.A_at(k) @ x + model.G_at(k) @ d + w_src.sample(rng)
    y_next = model.C_at(k + 1) @ x_next + v_src.sample(rng)
    return x_next, y_next


def simulate(model: SystemModel, x0, input_signal: Callable[[int], Sequence[float]] | np.ndarray,
             T: int, seed: int | None = None, dt: float = 1.0) -> Trajectory:
    """Simulate ``T`` steps from ``x0``.

    ``input_signal`` is either a callable ``k -> d[k]`` or an array of shape
    (T, m). Identical arguments give bit-identical trajectories.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    rng = np.random.default_rng(seed)
    n, m, p = model.n, model.m, model.p
    states = np.empty((T + 1, n))
    inputs = np.empty((T, m))
    meas = np.empty((T, p))
    states[0] = np.asarray(x0, dtype=float)
    noise = (GaussianNoise(model.Q_at(0)), GaussianNoise(model.R_at(1))) if model.is_constant else None
    if callable(input_signal):
        for k in range(T):
            inputs[k] = input_signal(k)
    else:
        inputs[:] = np.asarray(input_signal, dtype=float).reshape(T, m)
    for k in range(T):
        states[k + 1], meas[k] = step_truth(model, states[k], inputs[k], rng, k, _noise=noise)
    return Trajectory(states, inputs, meas, float(dt), seed)
