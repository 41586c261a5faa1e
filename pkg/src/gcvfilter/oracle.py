"""Batch GCV computation used to check the recursive filter.

Everything here is O(t^3) and meant for t up to a few hundred.  With
``X_t`` the stacked states, ``O_t = diag(C_1, ..., C_t)`` and

    W_t = Var(X_t),   V_t = O_t W_t O_t^T + gamma I_t,

the smoothed outputs are ``Yhat = H Y`` with ``H = I - gamma V^{-1}``.
Measurements are centered on the prior output mean before any of this.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .gcv import gcv_run
from .statespace import StateSpaceModel


class DegenerateScoreError(ArithmeticError):
    """GCV undefined because the degrees of freedom reach t."""


@dataclass(frozen=True)
class BatchGcvResult:
    W: np.ndarray
    V: np.ndarray
    H: np.ndarray
    dof: float
    ssr: float
    gcv: float
    yhat: np.ndarray


def batch_state_cov(model: StateSpaceModel, t: int) -> np.ndarray:
    """Block matrix of ``Cov(x_i, x_j)`` for i, j = 1..t (nt x nt)."""
    if t < 1:
        raise ValueError("t must be at least 1")
    n = model.state_dim
    W = np.zeros((n * t, n * t))
    diag = model.prior_cov.copy()
    for j in range(t):
        # column block j: Cov(x_i, x_j) for i >= j
        block = diag
        for i in range(j, t):
            W[i * n:(i + 1) * n, j * n:(j + 1) * n] = block
            W[j * n:(j + 1) * n, i * n:(i + 1) * n] = block.T
            if i + 1 < t:
                block = model.transition(i + 1) @ block
        if j + 1 < t:
            A = model.transition(j + 1)
            diag = A @ diag @ A.T + model.process_cov(j + 1)
    return W


def observation_matrix(model: StateSpaceModel, t: int) -> np.ndarray:
    n = model.state_dim
    O = np.zeros((t, n * t))
    for k in range(t):
        O[k, k * n:(k + 1) * n] = model.observation(k + 1)
    return O


def output_cov(model: StateSpaceModel, t: int, gamma: float | None = None) -> np.ndarray:
    """``V_t`` for the model's gamma, or for ``gamma`` if given."""
    O = observation_matrix(model, t)
    g = model.noise_var if gamma is None else gamma
    return O @ batch_state_cov(model, t) @ O.T + g * np.eye(t)


def centered(model: StateSpaceModel, measurements: Sequence[float]) -> np.ndarray:
    y = np.asarray(measurements, dtype=float)
    return y - model.prior_output_mean(len(y))


def batch_gcv(model: StateSpaceModel, measurements: Sequence[float]) -> BatchGcvResult:
    y = np.asarray(measurements, dtype=float)
    t = len(y)
    if t < 1:
        raise ValueError("need at least one measurement")
    gamma = model.noise_var
    O = observation_matrix(model, t)
    W = batch_state_cov(model, t)
    V = O @ W @ O.T + gamma * np.eye(t)
    V = 0.5 * (V + V.T)
    Vinv = cho_solve(cho_factor(V), np.eye(t))
    H = np.eye(t) - gamma * Vinv
    H = 0.5 * (H + H.T)
    mean = model.prior_output_mean(t)
    yc = y - mean
    resid = gamma * (Vinv @ yc)
    dof = float(np.trace(H))
    if t - dof < 1e-12:
        raise DegenerateScoreError(f"t - dof = {t - dof:.3g}; GCV undefined")
    ssr = float(resid @ resid)
    gcv = t * ssr / (t - dof) ** 2
    return BatchGcvResult(W, V, H, dof, ssr, gcv, mean + yc - resid)


def logdet_output_cov(model: StateSpaceModel, t: int, gamma: float) -> float:
    sign, logdet = np.linalg.slogdet(output_cov(model, t, gamma))
    return float(logdet)


def quad_output_cov(model: StateSpaceModel, yc: np.ndarray, gamma: float) -> float:
    V = output_cov(model, len(yc), gamma)
    return float(yc @ cho_solve(cho_factor(V), yc))


def _rel(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = np.linalg.norm(b)
    if scale == 0.0:
        return float(np.linalg.norm(a - b))
    return float(np.linalg.norm(a - b) / scale)


@dataclass(frozen=True)
class FdReport:
    """Relative errors of the four gamma-derivative identities."""

    dof: float
    ssr: float
    Sigma: float
    zeta: float

    def max(self) -> float:
        return max(self.dof, self.ssr, self.Sigma, self.zeta)


def fd_gamma_checks(model: StateSpaceModel, measurements: Sequence[float], h: float = 1e-5) -> FdReport:
    """Central-difference checks in gamma with step ``h * gamma``.

    * dof  = t - gamma d log det V / d gamma  vs. the recursive dof
    * ssr  = -gamma^2 d (Y^T V^{-1} Y) / d gamma  vs. the recursive ssr
    * Sigma_k vs. d P_k / d gamma, zeta_k vs. d xhat_k / d gamma (all k, worst case)
    """
    y = np.asarray(measurements, dtype=float)
    t = len(y)
    gamma = model.noise_var
    step = h * gamma
    if gamma - step <= 0.0:
        raise ValueError("gamma - h*gamma must stay positive")
    lo, hi = model.with_noise_var(gamma - step), model.with_noise_var(gamma + step)
    yc = centered(model, y)

    dlogdet = (logdet_output_cov(model, t, gamma + step) - logdet_output_cov(model, t, gamma - step)) / (2 * step)
    dquad = (quad_output_cov(model, yc, gamma + step) - quad_output_cov(model, yc, gamma - step)) / (2 * step)
    dof_fd = t - gamma * dlogdet
    ssr_fd = -gamma**2 * dquad

    run = gcv_run(model, y)
    run_lo, run_hi = gcv_run(lo, y), gcv_run(hi, y)
    err_sigma = 0.0
    err_zeta = 0.0
    for s, a, b in zip(run, run_lo, run_hi):
        if s.k == 1:
            continue  # Sigma_1 = 0 and zeta_1 = 0 exactly
        err_sigma = max(err_sigma, _rel(s.Sigma, (b.P - a.P) / (2 * step)))
        err_zeta = max(err_zeta, _rel(s.zeta, (b.xhat - a.xhat) / (2 * step)))
    final = run[-1]
    return FdReport(_rel(final.dof, dof_fd), _rel(final.ssr, ssr_fd), err_sigma, err_zeta)
