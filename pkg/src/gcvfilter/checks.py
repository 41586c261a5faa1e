"""Randomized self-checks of the GCV filter and a per-step timing harness."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .experiments import simulate
from .gcv import gcv_init, gcv_run, gcv_step
from .oracle import batch_gcv, fd_gamma_checks
from .statespace import StateSpaceModel, make_uniform_spline_model

ORACLE_RTOL = 1e-8
FD_RTOL = 1e-4


def random_psd(rng: np.random.Generator, n: int) -> np.ndarray:
    B = rng.standard_normal((n, n))
    return B @ B.T / n


def random_model(
    rng: np.random.Generator,
    n: int | None = None,
    gamma_range: tuple[float, float] = (0.1, 10.0),
    radius: float = 0.95,
    prior_mean: bool = True,
) -> StateSpaceModel:
    """Time-invariant model with stable A, random PSD Q and P0, gamma log-uniform."""
    n = int(rng.integers(1, 5)) if n is None else n
    A = rng.standard_normal((n, n))
    rho = np.max(np.abs(np.linalg.eigvals(A)))
    A *= rng.uniform(0.1, radius) / rho
    C = rng.standard_normal(n)
    mu = rng.standard_normal(n) if prior_mean else np.zeros(n)
    gamma = float(np.exp(rng.uniform(*np.log(gamma_range))))
    return StateSpaceModel(A, C, random_psd(rng, n), mu, random_psd(rng, n), gamma)


def random_data(rng: np.random.Generator, model: StateSpaceModel, t: int) -> np.ndarray:
    return simulate(model, t, rng)[1]


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / abs(b)


@dataclass(frozen=True)
class OracleReport:
    gcv: float
    dof: float
    ssr: float

    def max(self) -> float:
        return max(self.gcv, self.dof, self.ssr)


def oracle_equivalence(trials: int = 100, t: int = 50, seed: int = 0) -> OracleReport:
    """Worst relative error of recursive vs. batch GCV, dof and ssr."""
    rng = np.random.default_rng(seed)
    worst = np.zeros(3)
    for _ in range(trials):
        model = random_model(rng)
        y = random_data(rng, model, t)
        rec = gcv_run(model, y)[-1]
        ref = batch_gcv(model, y)
        errs = [rel_err(rec.gcv, ref.gcv), rel_err(rec.dof, ref.dof), rel_err(rec.ssr, ref.ssr)]
        worst = np.maximum(worst, errs)
    return OracleReport(*map(float, worst))


def fd_suite(trials: int = 20, t: int = 20, seed: int = 1, h: float = 1e-5) -> dict[str, float]:
    """Worst relative error of each finite-difference identity over random models."""
    rng = np.random.default_rng(seed)
    worst = dict(dof=0.0, ssr=0.0, Sigma=0.0, zeta=0.0)
    for _ in range(trials):
        model = random_model(rng)
        y = random_data(rng, model, t)
        rep = fd_gamma_checks(model, y, h)
        for key in worst:
            worst[key] = max(worst[key], getattr(rep, key))
    return worst


def bench_model() -> StateSpaceModel:
    """Dimension-3 cubic-spline model with unit sampling period."""
    return make_uniform_spline_model(2, 1.0, 1.0)


def time_steps(model: StateSpaceModel, y: np.ndarray) -> float:
    """Seconds spent in ``gcv_step`` absorbing ``y[1:]``."""
    state = gcv_init(model, y[0])
    start = time.perf_counter()
    for v in y[1:]:
        state = gcv_step(state, model, v)
    return time.perf_counter() - start


@dataclass(frozen=True)
class BenchResult:
    steps: int
    seconds: float
    seconds_double: float

    @property
    def ns_per_step(self) -> float:
        return 1e9 * self.seconds / self.steps

    @property
    def ns_per_step_double(self) -> float:
        return 1e9 * self.seconds_double / (2 * self.steps)

    @property
    def ratio(self) -> float:
        return self.seconds_double / self.seconds


def bench(steps: int, seed: int = 0) -> BenchResult:
    rng = np.random.default_rng(seed)
    model = bench_model()
    y = rng.standard_normal(2 * steps + 1)
    t1 = time_steps(model, y[: steps + 1])
    t2 = time_steps(model, y)
    return BenchResult(steps, t1, t2)
