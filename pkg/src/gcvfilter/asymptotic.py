"""Steady-state GCV filter for time-invariant models.

For a stabilizable and detectable model, ``P_k`` and ``Sigma_k`` converge to
the solutions of

    P = A P A^T + Q - A P C^T (C P C^T + gamma)^{-1} C P A^T       (Riccati)
    Sigma = (A - K C) Sigma (A - K C)^T + K K^T                     (Lyapunov)

with ``K = A P C^T / (C P C^T + gamma)``.  Freezing the gains at these values
gives a cheaper constant-gain filter whose scores converge to the exact ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .gcv import GcvState, gcv_score
from .kalman import symmetrize
from .statespace import StateSpaceModel

RTOL = 1e-12
MAX_ITER = 100_000


class SolverError(RuntimeError):
    """Matrix equation solver failed to converge or produced a bad solution."""


def spectral_radius(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M)))) if M.size else 0.0


def dare_residual(P: np.ndarray, A, C, Q, gamma: float) -> np.ndarray:
    APc = A @ P @ C
    return A @ P @ A.T + Q - np.outer(APc, APc) / (C @ P @ C + gamma) - P


def _riccati_map(P, A, C, Q, gamma):
    APc = A @ P @ C
    K = APc / (C @ P @ C + gamma)
    F = A - np.outer(K, C)
    return symmetrize(F @ P @ F.T + gamma * np.outer(K, K) + Q)


def _fixed_point(update, X0, what: str, rtol: float, max_iter: int) -> np.ndarray:
    X = X0
    for _ in range(max_iter):
        X_new = update(X)
        if np.linalg.norm(X_new - X) <= rtol * max(1.0, np.linalg.norm(X_new)):
            return X_new
        X = X_new
    raise SolverError(f"{what} iteration did not converge within {max_iter} iterations")


def solve_dare(
    A, C, Q, gamma: float, rtol: float = RTOL, max_iter: int = MAX_ITER
) -> np.ndarray:
    """Stabilizing solution of the filtering Riccati equation.

    Tries the Schur-based solver first, then polishes (or, if that solver
    fails, computes from scratch) by iterating the Riccati recursion.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_1d(np.asarray(C, dtype=float)).ravel()
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    try:
        P0 = scipy.linalg.solve_discrete_are(A.T, C[:, None], Q, np.array([[gamma]]))
        P0 = symmetrize(P0)
        if not np.all(np.isfinite(P0)):
            raise ValueError("non-finite solution")
    except (ValueError, np.linalg.LinAlgError):
        P0 = Q.copy()
    P = _fixed_point(lambda P: _riccati_map(P, A, C, Q, gamma), P0, "Riccati", rtol, max_iter)
    scale = 1.0 + np.linalg.norm(P)
    if np.linalg.norm(dare_residual(P, A, C, Q, gamma)) >= 1e-10 * scale:
        raise SolverError("Riccati residual above tolerance")
    return P


def solve_lyapunov(F, M, rtol: float = RTOL, max_iter: int = MAX_ITER) -> np.ndarray:
    """Solution of ``X = F X F^T + M`` for ``F`` with spectral radius below one."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    rho = spectral_radius(F)
    if rho >= 1.0:
        raise ValueError(f"spectral radius {rho:.6g} >= 1; no stable solution")
    X0 = symmetrize(scipy.linalg.solve_discrete_lyapunov(F, M))
    X = _fixed_point(lambda X: symmetrize(F @ X @ F.T + M), X0, "Lyapunov", rtol, max_iter)
    if np.linalg.norm(F @ X @ F.T + M - X) >= 1e-10 * (1.0 + np.linalg.norm(X)):
        raise SolverError("Lyapunov residual above tolerance")
    return X


@dataclass(frozen=True)
class StationarySolution:
    Pbar: np.ndarray
    Sigmabar: np.ndarray
    Kbar: np.ndarray
    Gbar: np.ndarray
    spectral_radius: float
    smoothing_ratio: float


def smoothing_ratio(sol: StationarySolution, C, gamma: float) -> float:
    """Long-run dof per measurement, ``1 - gamma (C Sigma C^T + 1) / (C P C^T + gamma)``."""
    C = np.asarray(C, dtype=float).ravel()
    return float(1.0 - gamma * (C @ sol.Sigmabar @ C + 1.0) / (C @ sol.Pbar @ C + gamma))


def stationary_gains(A, C, Q, gamma: float) -> StationarySolution:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_1d(np.asarray(C, dtype=float)).ravel()
    P = solve_dare(A, C, Q, gamma)
    s = C @ P @ C + gamma
    K = A @ P @ C / s
    F = A - np.outer(K, C)
    rho = spectral_radius(F)
    Sigma = solve_lyapunov(F, np.outer(K, K))
    G = (A @ Sigma @ C - K * (C @ Sigma @ C + 1.0)) / s
    ratio = float(1.0 - gamma * (C @ Sigma @ C + 1.0) / s)
    return StationarySolution(P, Sigma, K, G, rho, ratio)


def model_stationary_gains(model: StateSpaceModel) -> StationarySolution:
    if not model.time_invariant:
        raise ValueError("stationary gains need a time-invariant model")
    return stationary_gains(model.transitions, model.observations, model.process_covs, model.noise_var)


def _increments(P, Sigma, xhat, zeta, c, y, gamma):
    s = c @ P @ c + gamma
    ds = c @ Sigma @ c + 1.0
    e = y - c @ xhat
    ddof = 1.0 - gamma * ds / s
    dssr = gamma**2 * ds / s**2 * e**2 + 2.0 * gamma**2 * (c @ zeta) * e / s
    return float(ddof), float(dssr)


def asymptotic_gcv_init(model: StateSpaceModel, sol: StationarySolution, y1: float) -> GcvState:
    """First state of the constant-gain filter; P and Sigma sit at their limits."""
    c = model.observation(1)
    xhat = model.prior_mean.copy()
    zeta = np.zeros(model.state_dim)
    y1 = float(y1)
    dof, ssr = _increments(sol.Pbar, sol.Sigmabar, xhat, zeta, c, y1, model.noise_var)
    return GcvState(xhat, zeta, sol.Pbar, sol.Sigmabar, dof, ssr, gcv_score(1, ssr, dof), 1, y1, c)


def asymptotic_gcv_step(
    state: GcvState, model: StateSpaceModel, Kbar, Gbar, y_next: float
) -> GcvState:
    """Constant-gain analogue of ``gcv_step``.

    The dof/ssr increments are evaluated at ``state.P`` and ``state.Sigma``,
    which hold the stationary matrices when the state came from
    ``asymptotic_gcv_init``.
    """
    if not model.time_invariant:
        raise ValueError("the asymptotic filter needs a time-invariant model")
    A = model.transitions
    c = model.observations
    gamma = model.noise_var
    e = state.y - c @ state.xhat
    xhat = A @ state.xhat + Kbar * e
    zeta = A @ state.zeta - Kbar * (c @ state.zeta) + Gbar * e
    y_next = float(y_next)
    ddof, dssr = _increments(state.P, state.Sigma, xhat, zeta, c, y_next, gamma)
    k = state.k + 1
    dof = state.dof + ddof
    ssr = state.ssr + dssr
    return GcvState(xhat, zeta, state.P, state.Sigma, dof, ssr, gcv_score(k, ssr, dof), k, y_next, c)


def asymptotic_gcv_run(model: StateSpaceModel, measurements, sol: StationarySolution | None = None) -> list[GcvState]:
    sol = model_stationary_gains(model) if sol is None else sol
    out = []
    state = None
    for y in measurements:
        if state is None:
            state = asymptotic_gcv_init(model, sol, y)
        else:
            state = asymptotic_gcv_step(state, model, sol.Kbar, sol.Gbar, y)
        out.append(state)
    if not out:
        raise ValueError("need at least one measurement")
    return out
