"""Recursive joint input and state filter (RKF) and the input-blind baseline KF.

One step of the recursion:

1. predict the state without the unknown input,
2. form the innovation and its covariance S,
3. choose the minimum-variance unbiased input gain M (M C G = I),
4. estimate the input d = M * innovation,
5. correct the state with the joint gain L = K + (I - K C) G M.

The state covariance uses the Joseph form with the joint gain, which is exact
for any gain M satisfying M C G = I.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankDeficient, SingularInnovationCovariance
from .lti_system import SystemModel

COND_MAX = 1e12


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray
    k: int = 0


@dataclass(frozen=True)
class Innovation:
    value: np.ndarray
    cov: np.ndarray
    # cached inverse of cov, filled by ``innovation``
    cov_inv: np.ndarray | None = None

    @property
    def S_inv(self) -> np.ndarray:
        return self.cov_inv if self.cov_inv is not None else spd_inverse(self.cov)


@dataclass(frozen=True)
class InputEstimate:
    mean: np.ndarray
    cov: np.ndarray
    gain: np.ndarray


def symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def spd_inverse(S: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via Cholesky.

    Raises SingularInnovationCovariance when S is not PD or its condition
    number exceeds 1e12.
    """
    eig = np.linalg.eigvalsh(S)
    if eig[0] <= 0 or eig[-1] > COND_MAX * eig[0]:
        raise SingularInnovationCovariance(
            f"innovation covariance is singular or ill-conditioned (eigenvalues {eig[0]:.3e}..{eig[-1]:.3e})")
    L = np.linalg.cholesky(S)
    L_inv = np.linalg.inv(L)
    return L_inv.T @ L_inv


def predict(belief: GaussianBelief, model: SystemModel):
    """x_pred = A x, P_pred = A P A^T + Q. The unknown input is left out."""
    A = model.A_at(belief.k)
    x_pred = A @ belief.mean
    P_pred = A @ belief.cov @ A.T + model.Q_at(belief.k)
    return x_pred, symmetrize(P_pred)


def innovation(y, x_pred, P_pred, model: SystemModel, k: int = 1) -> Innovation:
    """Innovation y - C x_pred and its covariance C P_pred C^T + R at step ``k``."""
    C = model.C_at(k)
    S = symmetrize(C @ P_pred @ C.T + model.R_at(k))
    return Innovation(np.asarray(y, dtype=float) - C @ x_pred, S, spd_inverse(S))


def input_gain(model: SystemModel, S, k: int = 1, S_inv=None) -> np.ndarray:
    """Minimum-variance unbiased input gain.

    M = [(CG)^T S^-1 (CG)]^-1 (CG)^T S^-1, with C taken at step ``k`` and G
    at step ``k - 1``.
    """
    CG = model.C_at(k) @ model.G_at(k - 1)
    return mvu_gain(CG, S, S_inv)


def mvu_gain(CG, S, S_inv=None) -> np.ndarray:
    if S_inv is None:
        S_inv = spd_inverse(S)
    F = CG.T @ S_inv
    W = F @ CG
    sv = np.linalg.svd(W, compute_uv=False)
    if sv[-1] <= 1e-12 * max(sv[0], np.finfo(float).tiny) or sv[0] == 0:
        raise RankDeficient("(CG)^T S^-1 (CG) is singular; rank(CG) < m")
    return np.linalg.solve(W, F)


def estimate_input(M, innov: Innovation) -> InputEstimate:
    """d = M * innovation, Cov(d) = M S M^T."""
    d = M @ innov.value
    cov = symmetrize(M @ innov.cov @ M.T)
    return InputEstimate(d, cov, M)


def joint_gain(K, C, G, M) -> np.ndarray:
    n = K.shape[0]
    return K + (np.eye(n) - K @ C) @ G @ M


def update_state(x_pred, P_pred, d_hat: InputEstimate, innov: Innovation,
                 model: SystemModel, k: int = 1) -> GaussianBelief:
    """Correct the predicted state with the innovation and the input estimate.

    x = x_pred + K y~ + (I - K C) G d, which equals x_pred + L y~ when
    d = M y~. The covariance is the Joseph form
    (I - L C) P_pred (I - L C)^T + L R L^T.
    """
    C, G, R = model.C_at(k), model.G_at(k - 1), model.R_at(k)
    n = x_pred.shape[0]
    K = P_pred @ C.T @ innov.S_inv
    I_KC = np.eye(n) - K @ C
    x = x_pred + K @ innov.value + I_KC @ (G @ d_hat.mean)
    L = K + I_KC @ G @ d_hat.gain
    I_LC = np.eye(n) - L @ C
    P = I_LC @ P_pred @ I_LC.T + L @ R @ L.T
    return GaussianBelief(x, symmetrize(P), k)


def rkf_step(belief: GaussianBelief, y, model: SystemModel):
    """One unconstrained RKF step. Returns (belief, InputEstimate)."""
    k = belief.k + 1
    x_pred, P_pred = predict(belief, model)
    innov = innovation(y, x_pred, P_pred, model, k)
    M = input_gain(model, innov.cov, k, innov.cov_inv)
    d_hat = estimate_input(M, innov)
    return update_state(x_pred, P_pred, d_hat, innov, model, k), d_hat


def kalman_update(x_pred, P_pred, innov: Innovation, model: SystemModel, k: int = 1):
    """Standard KF correction (Joseph form). Returns (mean, cov, K)."""
    C, R = model.C_at(k), model.R_at(k)
    n = x_pred.shape[0]
    K = P_pred @ C.T @ innov.S_inv
    I_KC = np.eye(n) - K @ C
    P = I_KC @ P_pred @ I_KC.T + K @ R @ K.T
    return x_pred + K @ innov.value, symmetrize(P), K


def kf_step_blind(belief: GaussianBelief, y, model: SystemModel) -> GaussianBelief:
    """Kalman filter step that ignores the unknown input entirely."""
    k = belief.k + 1
    x_pred, P_pred = predict(belief, model)
    innov = innovation(y, x_pred, P_pred, model, k)
    x, P, _ = kalman_update(x_pred, P_pred, innov, model, k)
    return GaussianBelief(x, P, k)
