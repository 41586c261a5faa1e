"""The GCV filter: Kalman prediction extended with gamma-sensitivities.

Alongside the usual prediction ``xhat_k`` and covariance ``P_k`` the filter
carries ``zeta_k = d xhat_k / d gamma`` and ``Sigma_k = d P_k / d gamma``.  From
these it accumulates the degrees of freedom ``dof`` (trace of the influence
matrix of the fixed-interval smoother) and the residual sum of squares
``ssr``, which give

    GCV_k = k * ssr_k / (k - dof_k)^2

at constant cost per measurement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .kalman import innovation_variance, joseph_update, symmetrize
from .statespace import StateSpaceModel


@dataclass(frozen=True)
class GcvState:
    """Filter state after ``k`` measurements.

    ``xhat``, ``zeta``, ``P`` and ``Sigma`` are predictions for step ``k``
    (they have not yet used ``y_k``); ``dof``, ``ssr`` and ``gcv`` already
    include ``y_k``.  ``y`` and ``c`` keep the last measurement and its
    observation row, needed to form the innovation on the next step.
    """

    xhat: np.ndarray
    zeta: np.ndarray
    P: np.ndarray
    Sigma: np.ndarray
    dof: float
    ssr: float
    gcv: float
    k: int
    y: float
    c: np.ndarray

    @property
    def innovation(self) -> float:
        return float(self.y - self.c @ self.xhat)

    def filtered_state(self, gamma: float) -> np.ndarray:
        """Estimate of ``x_k`` given ``y_1..y_k`` (measurement update of ``xhat``)."""
        Pc = self.P @ self.c
        return self.xhat + Pc * (self.innovation / (self.c @ Pc + gamma))


def _score_increments(
    xhat: np.ndarray,
    zeta: np.ndarray,
    P: np.ndarray,
    Sigma: np.ndarray,
    c: np.ndarray,
    y: float,
    gamma: float,
) -> tuple[float, float]:
    """Contributions of one measurement to (dof, ssr)."""
    s = innovation_variance(P, c, gamma)
    e = y - c @ xhat
    ds = float(c @ Sigma @ c) + 1.0
    ddof = 1.0 - gamma * ds / s
    dssr = gamma**2 * ds / s**2 * e**2 + 2.0 * gamma**2 * float(c @ zeta) * e / s
    return ddof, dssr


def gcv_score(k: int, ssr: float, dof: float) -> float:
    return k * ssr / (k - dof) ** 2


def gcv_init(model: StateSpaceModel, y1: float, c1: np.ndarray | None = None) -> GcvState:
    """State after the first measurement.

    ``xhat = mu``, ``zeta = 0``, ``P = P0``, ``Sigma = 0``;
    ``dof = 1 - gamma / s``, ``ssr = gamma^2 e^2 / s^2`` with
    ``s = C P0 C^T + gamma`` and ``e = y1 - C mu``.  ``c1`` overrides the
    model's first observation row.
    """
    n = model.state_dim
    c = model.observation(1) if c1 is None else np.asarray(c1, dtype=float)
    if c.shape != (n,):
        raise ValueError(f"observation row must have length {n}")
    xhat = model.prior_mean.copy()
    zeta = np.zeros(n)
    P = model.prior_cov.copy()
    Sigma = np.zeros((n, n))
    y1 = float(y1)
    dof, ssr = _score_increments(xhat, zeta, P, Sigma, c, y1, model.noise_var)
    return GcvState(xhat, zeta, P, Sigma, dof, ssr, gcv_score(1, ssr, dof), 1, y1, c)


def gcv_step(
    state: GcvState, model: StateSpaceModel, y_next: float, c_next: np.ndarray | None = None
) -> GcvState:
    """Absorb ``y_{k+1}``.

    First the prediction quantities move from step k to k+1 using ``A_k``,
    ``Q_k``, the stored ``c_k`` and the innovation ``e_k = y_k - c_k xhat_k``::

        s     = c P c^T + gamma
        K     = A P c^T / s
        G     = (A Sigma c^T - K (c Sigma c^T + 1)) / s
        xhat' = A xhat + K e
        zeta' = (A - K c) zeta + G e
        P'    = (A - K c) P (A - K c)^T + gamma K K^T + Q
        Sigma'= (A - K c) Sigma (A - K c)^T + K K^T

    Then ``y_{k+1}`` with ``c_{k+1}`` (default ``model.observation(k + 1)``)
    updates dof, ssr and GCV.  Non-finite inputs propagate to the outputs.
    """
    k = state.k
    gamma = model.noise_var
    A = model.transition(k)
    c = state.c
    if state.xhat.shape != (model.state_dim,):
        raise ValueError("state dimension does not match the model")
    identity = model.identity_transition

    Pc = state.P @ c
    Sc = state.Sigma @ c
    s = innovation_variance(state.P, c, gamma)
    e = state.y - c @ state.xhat
    if identity:
        K = Pc / s
        G = (Sc - K * (c @ Sc + 1.0)) / s
        xhat = state.xhat + K * e
        zeta = state.zeta - K * (c @ state.zeta) + G * e
    else:
        K = A @ Pc / s
        G = (A @ Sc - K * (c @ Sc + 1.0)) / s
        xhat = A @ state.xhat + K * e
        zeta = A @ state.zeta - K * (c @ state.zeta) + G * e
    if identity:
        # rank-two updates are exactly symmetric already
        P = joseph_update(A, K, c, state.P, gamma, identity)
        if not model.zero_process_cov:
            P = symmetrize(P + model.process_cov(k))
        Sigma = joseph_update(A, K, c, state.Sigma, 1.0, identity)
    else:
        P = symmetrize(joseph_update(A, K, c, state.P, gamma) + model.process_cov(k))
        Sigma = symmetrize(joseph_update(A, K, c, state.Sigma, 1.0))

    c_new = model.observation(k + 1) if c_next is None else np.asarray(c_next, dtype=float)
    if c_new.shape != c.shape:
        raise ValueError(f"observation row must have length {len(c)}")
    y_next = float(y_next)
    ddof, dssr = _score_increments(xhat, zeta, P, Sigma, c_new, y_next, gamma)
    dof = state.dof + ddof
    ssr = state.ssr + dssr
    return GcvState(xhat, zeta, P, Sigma, dof, ssr, gcv_score(k + 1, ssr, dof), k + 1, y_next, c_new)


def gcv_iter(model: StateSpaceModel, measurements: Iterable[float]) -> Iterator[GcvState]:
    """Lazily yield the filter state after each measurement."""
    state = None
    for y in measurements:
        state = gcv_init(model, y) if state is None else gcv_step(state, model, y)
        yield state
    if state is None:
        raise ValueError("need at least one measurement")


def gcv_run(model: StateSpaceModel, measurements: Sequence[float]) -> list[GcvState]:
    """States after 1, 2, ..., t measurements."""
    return list(gcv_iter(model, measurements))

