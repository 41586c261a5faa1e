"""Linear state-space models with scalar measurements.

The model is

    x_{k+1} = A_k x_k + w_k,     w_k ~ (0, Q_k)
    y_k     = C_k x_k + e_k,     e_k ~ (0, gamma)
    x_1     ~ (mu, P0)

Step indices are 1-based throughout, so ``model.transition(1)`` is the matrix
mapping ``x_1`` to ``x_2``.
"""

from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

SYM_TOL = 1e-9


class ScheduleError(ValueError):
    """Raised for sampling schedules that are not strictly increasing."""


def _frozen(a: np.ndarray) -> np.ndarray:
    if isinstance(a, np.ndarray) and a.dtype == float and not a.flags.writeable:
        return a  # already immutable, safe to share
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_psd(name: str, m: np.ndarray) -> None:
    # works on a single matrix or a stack of matrices
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if not np.allclose(m, np.swapaxes(m, -1, -2), rtol=0.0, atol=SYM_TOL * scale):
        raise ValueError(f"{name} is not symmetric")
    if m.size and np.min(np.linalg.eigvalsh(m)) < -SYM_TOL * scale:
        raise ValueError(f"{name} is not positive semidefinite")


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """Possibly time-varying linear Gaussian model with scalar output.

    ``transitions``, ``observations`` and ``process_covs`` hold either a single
    matrix (time-invariant) or a stack indexed by step ``k - 1``.
    ``observations`` rows are the 1 x n matrices ``C_k`` stored as vectors.
    """

    transitions: np.ndarray
    observations: np.ndarray
    process_covs: np.ndarray
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    noise_var: float
    validate: dataclasses.InitVar[bool] = True

    def __post_init__(self, validate: bool) -> None:
        for name in ("transitions", "observations", "process_covs", "prior_mean", "prior_cov"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "noise_var", float(self.noise_var))
        if validate:
            self._validate()

    def _validate(self) -> None:
        n = self.state_dim
        if not (self.noise_var > 0.0 and math.isfinite(self.noise_var)):
            raise ValueError(f"noise variance must be positive, got {self.noise_var}")
        if self.prior_mean.shape != (n,) or self.prior_cov.shape != (n, n):
            raise ValueError("prior mean/covariance do not match the state dimension")
        if self.transitions.shape[-2:] != (n, n) or self.transitions.ndim not in (2, 3):
            raise ValueError(f"transition matrices must be {n}x{n}")
        if self.process_covs.shape[-2:] != (n, n) or self.process_covs.ndim not in (2, 3):
            raise ValueError(f"process covariances must be {n}x{n}")
        if self.observations.shape[-1] != n or self.observations.ndim not in (1, 2):
            raise ValueError(f"observation rows must have length {n}")
        _check_psd("prior_cov", self.prior_cov)
        _check_psd("process_cov", self.process_covs)

    @property
    def state_dim(self) -> int:
        return self.prior_cov.shape[0]

    @property
    def gamma(self) -> float:
        return self.noise_var

    @property
    def time_invariant(self) -> bool:
        return (
            self.transitions.ndim == 2
            and self.observations.ndim == 1
            and self.process_covs.ndim == 2
        )

    @functools.cached_property
    def identity_transition(self) -> bool:
        """True when every ``A_k`` is exactly the identity (e.g. FIR models)."""
        return self.transitions.ndim == 2 and np.array_equal(
            self.transitions, np.eye(self.state_dim)
        )

    @functools.cached_property
    def zero_process_cov(self) -> bool:
        return not np.any(self.process_covs)

    @staticmethod
    def _at(arr: np.ndarray, k: int, ndim: int, what: str) -> np.ndarray:
        if arr.ndim == ndim:
            return arr
        if not 1 <= k <= arr.shape[0]:
            raise IndexError(f"{what} not defined for step {k} (have {arr.shape[0]})")
        return arr[k - 1]

    def transition(self, k: int) -> np.ndarray:
        return self._at(self.transitions, k, 2, "transition")

    def observation(self, k: int) -> np.ndarray:
        return self._at(self.observations, k, 1, "observation")

    def process_cov(self, k: int) -> np.ndarray:
        return self._at(self.process_covs, k, 2, "process covariance")

    def with_noise_var(self, gamma: float) -> StateSpaceModel:
        # matrices were validated already; only gamma changes
        if not gamma > 0.0:
            raise ValueError(f"noise variance must be positive, got {gamma}")
        return dataclasses.replace(self, noise_var=gamma, validate=False)

    def with_prior_cov(self, prior_cov: np.ndarray) -> StateSpaceModel:
        return dataclasses.replace(self, prior_cov=prior_cov)

    def prior_output_mean(self, t: int) -> np.ndarray:
        """Means ``C_k E[x_k]`` for k = 1..t under the prior (no data)."""
        out = np.empty(t)
        m = self.prior_mean
        for k in range(1, t + 1):
            out[k - 1] = self.observation(k) @ m
            if k < t:
                m = self.transition(k) @ m
        return out


@dataclass(frozen=True)
class SamplingSchedule:
    """Strictly increasing sampling instants ``t_1 < t_2 < ...``."""

    timestamps: tuple[float, ...]

    def __post_init__(self) -> None:
        ts = tuple(float(t) for t in self.timestamps)
        if not ts:
            raise ScheduleError("schedule must contain at least one timestamp")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ScheduleError("timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", ts)

    @classmethod
    def uniform(cls, count: int, period: float = 1.0, start: float = 0.0) -> SamplingSchedule:
        return cls(tuple(start + period * np.arange(count)))

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(np.asarray(self.timestamps))

    def __len__(self) -> int:
        return len(self.timestamps)


def integrator_transition(order: int, gap: float) -> np.ndarray:
    """Lower-triangular Taylor matrix: entry (i, j) = T^(i-j) / (i-j)!, i >= j."""
    n = order + 1
    A = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            A[i, j] = gap ** (i - j) / math.factorial(i - j)
    return A


def integrator_process_cov(order: int, gap: float) -> np.ndarray:
    """Covariance of the m-fold integrated Wiener increment over one gap.

    With 1-based indices, ``[Q]_{ij} = T^(i+j-1) / ((i-1)! (j-1)! (i+j-1))``.
    """
    n = order + 1
    Q = np.empty((n, n))
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            p = i + j - 1
            Q[i - 1, j - 1] = gap**p / (math.factorial(i - 1) * math.factorial(j - 1) * p)
    return Q


def make_spline_model(
    order: int,
    schedule: SamplingSchedule | Sequence[float],
    gamma: float,
    prior_cov: np.ndarray | float | None = None,
) -> StateSpaceModel:
    """Integrated Wiener process model behind order-``order`` smoothing splines.

    The state has ``order + 1`` entries: the first is the Wiener process itself,
    each following entry integrates the previous one, and the observation picks
    the last entry (the signal value).  ``prior_cov`` may be a full matrix or a
    scalar multiple of the identity (default 1).
    """
    if int(order) != order or order < 1:
        raise ValueError(f"spline order must be a positive integer, got {order}")
    if not isinstance(schedule, SamplingSchedule):
        schedule = SamplingSchedule(tuple(schedule))
    n = order + 1
    gaps = schedule.gaps
    A = np.stack([integrator_transition(order, T) for T in gaps]) if len(gaps) else np.zeros((0, n, n))
    Q = np.stack([integrator_process_cov(order, T) for T in gaps]) if len(gaps) else np.zeros((0, n, n))
    C = np.zeros(n)
    C[-1] = 1.0
    if prior_cov is None:
        prior_cov = 1.0
    P0 = np.asarray(prior_cov, dtype=float)
    if P0.ndim == 0:
        P0 = float(P0) * np.eye(n)
    return StateSpaceModel(A, C, Q, np.zeros(n), P0, gamma)


def make_uniform_spline_model(
    order: int, period: float, gamma: float, prior_cov: np.ndarray | float | None = None
) -> StateSpaceModel:
    """Time-invariant version of :func:`make_spline_model` for a constant gap."""
    if not period > 0.0:
        raise ScheduleError("sampling period must be positive")
    model = make_spline_model(order, (0.0, period), gamma, prior_cov)
    return dataclasses.replace(
        model, transitions=model.transitions[0], process_covs=model.process_covs[0]
    )


DC_MOTOR_A = np.array([[0.7, 0.0], [0.1, 1.0]])
DC_MOTOR_C = np.array([0.0, 1.0])
DC_MOTOR_B = np.array([11.81, 0.625])
DC_MOTOR_Q = np.outer(DC_MOTOR_B, DC_MOTOR_B)
DC_MOTOR_Q_PERTURBATION = np.diag([0.0, 100.0])


def make_dc_motor_model(
    gamma: float = 30.0, prior_cov: np.ndarray | None = None, perturbed: bool = False
) -> StateSpaceModel:
    """Two-state DC-motor model; ``perturbed`` adds 100 to the position noise."""
    Q = DC_MOTOR_Q + DC_MOTOR_Q_PERTURBATION if perturbed else DC_MOTOR_Q
    P0 = np.eye(2) if prior_cov is None else prior_cov
    return StateSpaceModel(DC_MOTOR_A, DC_MOTOR_C, Q, np.zeros(2), P0, gamma)


def stable_spline_gram(alpha: float, m: int) -> np.ndarray:
    """First-order stable spline kernel, ``[P0]_{ij} = alpha^max(i, j)`` (1-based)."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m}")
    idx = np.arange(1, m + 1)
    return float(alpha) ** np.maximum.outer(idx, idx).astype(float)


def fir_regressors(inputs: Sequence[float], m: int) -> np.ndarray:
    """Rows ``[u_k, u_{k-1}, ..., u_{k-m+1}]`` with the system at rest before k=1."""
    u = np.asarray(inputs, dtype=float)
    phi = np.zeros((len(u), m))
    for lag in range(min(m, len(u))):
        phi[lag:, lag] = u[: len(u) - lag]
    return phi


def make_fir_model(
    regressors: Sequence[Sequence[float]] | np.ndarray,
    alpha: float,
    fir_length: int,
    gamma: float,
) -> StateSpaceModel:
    """Constant-state model for regularized FIR identification.

    The state is the impulse response ``g`` (x_{k+1} = x_k), observed through
    the k-th regressor row, with stable spline prior covariance.
    """
    phi = np.asarray(regressors, dtype=float)
    if phi.ndim != 2 or phi.shape[1] != fir_length:
        raise ValueError(f"each regressor must have length {fir_length}")
    P0 = stable_spline_gram(alpha, fir_length)
    m = fir_length
    return StateSpaceModel(np.eye(m), phi, np.zeros((m, m)), np.zeros(m), P0, gamma)
