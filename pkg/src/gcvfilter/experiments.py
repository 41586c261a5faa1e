"""Monte Carlo drivers for the spline, model-mismatch and FIR identification studies.

Every driver takes an :class:`ExperimentConfig`, is deterministic given its
seed, and returns one :class:`DemoRun` per Monte Carlo run.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .bank import FilterBank, ParamGrid, argmin_index, log_grid
from .kalman import smoothed_outputs
from .statespace import (
    StateSpaceModel,
    fir_regressors,
    make_dc_motor_model,
    make_spline_model,
    stable_spline_gram,
)

RNG_NAME = "numpy.random.PCG64"
EXPERIMENTS = ("spline", "mismatch", "sysid")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class UndefinedFitError(ValueError):
    """Fit is undefined because the reference signal is constant."""


def fit_metric(truth: Sequence[float], estimate: Sequence[float]) -> float:
    """Percentage fit ``100 (1 - |z - zhat| / |z - mean(z)|)``; may be negative."""
    z = np.asarray(truth, dtype=float)
    zh = np.asarray(estimate, dtype=float)
    if z.shape != zh.shape or z.ndim != 1:
        raise ValueError("truth and estimate must be vectors of equal length")
    if len(z) < 2:
        raise ValueError("fit needs at least two points")
    denom = np.linalg.norm(z - z.mean())
    if denom == 0.0:
        raise UndefinedFitError("truth is constant; fit undefined")
    return float(100.0 * (1.0 - np.linalg.norm(z - zh) / denom))


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    runs: int = 1
    samples: int | None = None
    noise_std: float | None = None
    gamma_lo: float = 1e-2
    gamma_hi: float | None = None
    gamma_count: int | None = None
    alphas: tuple[float, ...] = (0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99)
    oracle_every: int = 10
    # spline study
    order: int = 2
    time_scale: float = 30.0
    prior_scale: float = 1e4
    # mismatch study
    true_gamma: float = 30.0
    nominal_gamma: float = 30.0
    # sysid study
    fir_length: int = 200
    noise_ratio: float = 0.1
    max_poles: int = 10
    pole_radius: float = 0.95
    response_file: str | None = None
    output: str | None = None

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        defaults = {
            "spline": dict(samples=400, noise_std=0.3, gamma_hi=1e4, gamma_count=100),
            "mismatch": dict(samples=200, noise_std=None, gamma_hi=1e4, gamma_count=100),
            "sysid": dict(samples=200, noise_std=None, gamma_hi=1e3, gamma_count=20),
        }[self.experiment]
        for key, value in defaults.items():
            if getattr(self, key) is None:
                object.__setattr__(self, key, value)
        object.__setattr__(self, "alphas", tuple(sorted(float(a) for a in self.alphas)))
        if self.runs < 1 or self.samples < 2:
            raise ConfigError("need runs >= 1 and samples >= 2")
        if self.gamma_count < 2 or not 0.0 < self.gamma_lo < self.gamma_hi:
            raise ConfigError("gamma grid needs 0 < gamma_lo < gamma_hi and gamma_count >= 2")
        if self.oracle_every < 1:
            raise ConfigError("oracle_every must be positive")
        if any(not 0.0 <= a < 1.0 for a in self.alphas):
            raise ConfigError("alphas must lie in [0, 1)")
        if self.noise_std is not None and self.noise_std < 0.0:
            raise ConfigError("noise_std must be nonnegative")

    @property
    def gammas(self) -> np.ndarray:
        return log_grid(self.gamma_lo, self.gamma_hi, self.gamma_count)

    def eval_times(self) -> list[int]:
        """Times at which the smoother-based estimators are evaluated."""
        t = self.samples
        times = list(range(self.oracle_every, t, self.oracle_every))
        times = [s for s in times if s >= 2]
        return times + [t]


@dataclass(frozen=True)
class FitSeries:
    label: str
    times: np.ndarray
    fits: np.ndarray
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def final(self) -> float:
        return float(self.fits[-1])


@dataclass(frozen=True)
class DemoRun:
    run: int
    series: dict[str, FitSeries]
    truth: np.ndarray
    measurements: np.ndarray

    def final_fits(self) -> dict[str, float]:
        return {label: s.final for label, s in self.series.items()}


def run_rngs(seed: int, runs: int) -> list[np.random.Generator]:
    """Independent per-run generators spawned from one seed."""
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(runs)]


def simulate(
    model: StateSpaceModel, t: int, seed: int | np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw states ``x_1..x_t``, noisy outputs and noiseless outputs ``C_k x_k``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = model.state_dim
    states = np.empty((t, n))
    x = rng.multivariate_normal(model.prior_mean, model.prior_cov, method="eigh")
    for k in range(1, t + 1):
        states[k - 1] = x
        if k < t:
            w = rng.multivariate_normal(np.zeros(n), model.process_cov(k), method="eigh")
            x = model.transition(k) @ x + w
    clean = np.array([model.observation(k) @ states[k - 1] for k in range(1, t + 1)])
    noisy = clean + math.sqrt(model.noise_var) * rng.standard_normal(t)
    return states, noisy, clean


def _smoothed_fit(model: StateSpaceModel, y: np.ndarray, z: np.ndarray, t: int) -> float:
    return fit_metric(z[:t], smoothed_outputs(model, y[:t]))


def _tuned_estimators(
    base: StateSpaceModel,
    y: np.ndarray,
    z: np.ndarray,
    config: ExperimentConfig,
    times: list[int],
) -> dict[str, FitSeries]:
    """GCV- and fit-selected gamma, each followed by the smoother, at ``times``."""
    gammas = config.gammas
    grid = ParamGrid.product(lambda p: base.with_noise_var(p["gamma"]), gammas)
    bank = FilterBank(grid).run(y)
    g_gcv, f_gcv, g_orc, f_orc = [], [], [], []
    for t in times:
        i = bank[t - 1].best_index
        g = grid.points[i]["gamma"]
        g_gcv.append(g)
        f_gcv.append(_smoothed_fit(base.with_noise_var(g), y, z, t))
        fits = [_smoothed_fit(base.with_noise_var(gg), y, z, t) for gg in gammas]
        j = argmin_index(-np.asarray(fits))
        g_orc.append(gammas[j])
        f_orc.append(fits[j])
    ts = np.asarray(times)
    return {
        "gcv": FitSeries("gcv", ts, np.asarray(f_gcv), {"gamma": np.asarray(g_gcv)}),
        "oracle": FitSeries("oracle", ts, np.asarray(f_orc), {"gamma": np.asarray(g_orc)}),
    }


def spline_truth(instants: np.ndarray) -> np.ndarray:
    return np.exp(np.sin(8.0 * instants))


def run_spline_demo(config: ExperimentConfig, times: list[int] | None = None) -> list[DemoRun]:
    """Cubic smoothing spline with gamma tuned online by GCV vs. by an oracle.

    Sampling instants are uniform on [0, 1], sorted, and scaled by
    ``time_scale`` before building the integrated Wiener model.
    """
    times = config.eval_times() if times is None else times
    out = []
    for r, rng in enumerate(run_rngs(config.seed, config.runs)):
        instants = np.sort(rng.uniform(0.0, 1.0, config.samples))
        z = spline_truth(instants)
        y = z + config.noise_std * rng.standard_normal(config.samples)
        base = make_spline_model(config.order, instants * config.time_scale, 1.0, config.prior_scale)
        out.append(DemoRun(r, _tuned_estimators(base, y, z, config, times), z, y))
    return out


def run_mismatch_demo(config: ExperimentConfig, times: list[int] | None = None) -> list[DemoRun]:
    """DC-motor data; estimators use the wrong process covariance Q + diag(0, 100)."""
    times = config.eval_times() if times is None else times
    truth_model = make_dc_motor_model(config.true_gamma)
    if config.noise_std is not None:
        truth_model = truth_model.with_noise_var(config.noise_std**2)
    wrong = make_dc_motor_model(config.nominal_gamma, perturbed=True)
    out = []
    for r, rng in enumerate(run_rngs(config.seed, config.runs)):
        _, y, z = simulate(truth_model, config.samples, rng)
        series = _tuned_estimators(wrong, y, z, config, times)
        nominal = np.array([_smoothed_fit(wrong, y, z, t) for t in times])
        series["nominal"] = FitSeries(
            "nominal", np.asarray(times), nominal, {"gamma": np.full(len(times), wrong.noise_var)}
        )
        out.append(DemoRun(r, series, z, y))
    return out


def random_impulse_response(rng: np.random.Generator, m: int, max_poles: int = 10, radius: float = 0.95) -> np.ndarray:
    """Surrogate generator: truncated impulse response of a random stable rational system.

    Poles are uniform in the disk of the given radius (complex ones in
    conjugate pairs); numerator coefficients are standard normal.
    """
    order = int(rng.integers(1, max_poles + 1))
    poles: list[complex] = []
    while len(poles) < order:
        rad = radius * math.sqrt(rng.uniform())
        ang = rng.uniform(0.0, 2.0 * math.pi)
        if len(poles) + 2 <= order and rng.uniform() < 0.5:
            p = rad * np.exp(1j * ang)
            poles += [p, np.conj(p)]
        else:
            poles.append(rad * math.cos(ang))
    den = np.real(np.poly(poles))
    num = rng.standard_normal(order + 1)
    impulse = np.zeros(m)
    impulse[0] = 1.0
    return lfilter(num, den, impulse)


def load_impulse_responses(path: str, m: int) -> np.ndarray:
    g = np.atleast_2d(np.loadtxt(path, delimiter=",", comments="#", ndmin=2))
    if g.shape[1] != m:
        raise ConfigError(f"impulse responses in {path} must have length {m}, got {g.shape[1]}")
    return g


@functools.lru_cache(maxsize=64)
def _fir_base(alpha: float, m: int) -> StateSpaceModel:
    # observation rows arrive through the bank's regressor context
    return StateSpaceModel(np.eye(m), np.zeros(m), np.zeros((m, m)), np.zeros(m), stable_spline_gram(alpha, m), 1.0)


def fir_factory(m: int):
    def factory(point) -> StateSpaceModel:
        return _fir_base(float(point["alpha"]), m).with_noise_var(point["gamma"])

    return factory


def run_sysid_demo(config: ExperimentConfig) -> list[DemoRun]:
    """Online FIR identification with (gamma, alpha) chosen by a GCV bank."""
    m = config.fir_length
    t_max = config.samples
    responses = load_impulse_responses(config.response_file, m) if config.response_file else None
    if responses is not None and len(responses) < config.runs:
        raise ConfigError(f"{config.response_file} holds {len(responses)} responses, need {config.runs}")
    grid = ParamGrid.product(fir_factory(m), config.gammas, alpha=config.alphas)
    bank = FilterBank(grid)
    out = []
    for r, rng in enumerate(run_rngs(config.seed, config.runs)):
        g = responses[r] if responses is not None else random_impulse_response(
            rng, m, config.max_poles, config.pole_radius
        )
        u = rng.standard_normal(t_max)
        phi = fir_regressors(u, m)
        clean = phi @ g
        std = config.noise_std if config.noise_std is not None else config.noise_ratio * float(np.std(clean))
        y = clean + std * rng.standard_normal(t_max)
        fits, gam, alp = [], [], []
        state = None
        for k in range(t_max):
            state = bank.init(y[k], phi[k]) if state is None else bank.step(state, y[k], phi[k])
            point = grid.points[state.best_index]
            ghat = state.states[state.best_index].filtered_state(point["gamma"])
            fits.append(fit_metric(g, ghat))
            gam.append(point["gamma"])
            alp.append(point["alpha"])
        ts = np.arange(1, t_max + 1)
        series = {"gcv": FitSeries("gcv", ts, np.asarray(fits), {"gamma": np.asarray(gam), "alpha": np.asarray(alp)})}
        out.append(DemoRun(r, series, g, y))
    return out


def run_experiment(config: ExperimentConfig) -> list[DemoRun]:
    return {
        "spline": run_spline_demo,
        "mismatch": run_mismatch_demo,
        "sysid": run_sysid_demo,
    }[config.experiment](config)
