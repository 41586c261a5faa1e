"""One-step-ahead Kalman predictor and fixed-interval smoother."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .statespace import StateSpaceModel


class FilterError(ArithmeticError):
    """Internal-consistency failure (e.g. non-positive innovation variance)."""


@dataclass(frozen=True)
class KalmanState:
    """Prediction ``xhat`` of ``x_k`` given ``y_1..y_{k-1}`` and its covariance."""

    xhat: np.ndarray
    P: np.ndarray
    k: int = 1

    @classmethod
    def from_prior(cls, model: StateSpaceModel) -> KalmanState:
        return cls(model.prior_mean.copy(), model.prior_cov.copy(), 1)


def symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def joseph_update(
    A: np.ndarray,
    K: np.ndarray,
    c: np.ndarray,
    M: np.ndarray,
    kk_weight: float = 0.0,
    identity: bool = False,
) -> np.ndarray:
    """``(A - K c) M (A - K c)^T + kk_weight K K^T`` for symmetric ``M``.

    With ``identity`` set, ``A`` is taken to be I and the product is expanded
    into one symmetric rank-two correction, O(n^2) instead of O(n^3); the
    result is then exactly symmetric.
    """
    if identity:
        h = M @ c
        w = h - (0.5 * (c @ h + kk_weight)) * K
        D = np.outer(K, w)
        D += D.T
        return np.subtract(M, D, out=D)
    F = A - np.outer(K, c)
    out = F @ M @ F.T
    if kk_weight:
        out += kk_weight * np.outer(K, K)
    return out


def innovation_variance(P: np.ndarray, c: np.ndarray, gamma: float) -> float:
    s = float(c @ P @ c) + gamma
    if not s > 0.0:
        raise FilterError(f"innovation variance {s} is not positive")
    return s


def kf_step(state: KalmanState, model: StateSpaceModel, y: float) -> KalmanState:
    """Absorb ``y_k`` and predict step k+1.

    Uses ``K = A P c^T / s`` and the symmetric covariance form
    ``(A - K c) P (A - K c)^T + gamma K K^T + Q``.
    """
    k = state.k
    A = model.transition(k)
    c = model.observation(k)
    gamma = model.noise_var
    if state.xhat.shape != (model.state_dim,):
        raise ValueError("state dimension does not match the model")
    s = innovation_variance(state.P, c, gamma)
    K = A @ (state.P @ c) / s
    e = y - c @ state.xhat
    xhat = A @ state.xhat + K * e
    P = joseph_update(A, K, c, state.P, gamma, model.identity_transition)
    P = symmetrize(P + model.process_cov(k))
    return KalmanState(xhat, P, k + 1)


@dataclass(frozen=True)
class SmootherOutput:
    """Smoothed means/covariances of ``x_k`` given ``y_1..y_t`` for k = 1..t."""

    means: np.ndarray
    covs: np.ndarray
    outputs: np.ndarray

    def __len__(self) -> int:
        return len(self.outputs)


def rts_smooth(
    model: StateSpaceModel, measurements: Sequence[float], with_covariance: bool = True
) -> SmootherOutput:
    """Fixed-interval smoother over ``measurements`` (y_1..y_t).

    Forward pass: predictor form of the Kalman filter.  Backward pass: the
    adjoint recursion ``r_{k-1} = c_k e_k / s_k + L_k^T r_k`` with
    ``L_k = A_k - K_k c_k``, giving ``x_{k|t} = xhat_k + P_k r_{k-1}``.  This is
    algebraically the RTS smoother but never inverts a prediction covariance,
    so it also works for singular ``P_k`` (e.g. the FIR model).
    """
    y = np.asarray(measurements, dtype=float)
    t = len(y)
    if t == 0:
        raise ValueError("need at least one measurement")
    n = model.state_dim
    gamma = model.noise_var
    identity = model.identity_transition
    xs = np.empty((t, n))
    Ps = np.empty((t, n, n))
    Ks = np.empty((t, n))
    es = np.empty(t)
    ss = np.empty(t)
    x = model.prior_mean.copy()
    P = model.prior_cov.copy()
    for k in range(1, t + 1):
        c = model.observation(k)
        xs[k - 1], Ps[k - 1] = x, P
        s = innovation_variance(P, c, gamma)
        e = y[k - 1] - c @ x
        es[k - 1], ss[k - 1] = e, s
        if k == t:
            break
        A = model.transition(k)
        K = A @ (P @ c) / s
        Ks[k - 1] = K
        x = A @ x + K * e
        P = symmetrize(joseph_update(A, K, c, P, gamma, identity) + model.process_cov(k))

    means = np.empty((t, n))
    covs = np.empty((t, n, n)) if with_covariance else np.empty((0, n, n))
    outputs = np.empty(t)
    r = np.zeros(n)
    N = np.zeros((n, n))
    for k in range(t, 0, -1):
        c = model.observation(k)
        if k < t:
            # L_k^T r_k, L_k = A_k - K_k c_k
            A = model.transition(k)
            K = Ks[k - 1]
            r = A.T @ r - c * (K @ r)
            if with_covariance:
                # L^T N L == joseph_update with the roles of K and c swapped
                N = joseph_update(A.T, c, K, N, identity=identity)
        r = r + c * (es[k - 1] / ss[k - 1])
        if with_covariance:
            N = N + np.outer(c, c) / ss[k - 1]
            P = Ps[k - 1]
            covs[k - 1] = symmetrize(P - P @ N @ P)
        means[k - 1] = xs[k - 1] + Ps[k - 1] @ r
        outputs[k - 1] = c @ means[k - 1]
    return SmootherOutput(means, covs, outputs)


def smoothed_outputs(model: StateSpaceModel, measurements: Sequence[float]) -> np.ndarray:
    """``C_k x_{k|t}`` for k = 1..t, skipping the covariance pass."""
    return rts_smooth(model, measurements, with_covariance=False).outputs
