import dataclasses

import numpy as np
import pytest

from gcvfilter.experiments import (
    ConfigError,
    ExperimentConfig,
    UndefinedFitError,
    fit_metric,
    random_impulse_response,
    run_experiment,
    run_mismatch_demo,
    run_rngs,
    run_spline_demo,
    run_sysid_demo,
    simulate,
)
from gcvfilter.statespace import make_dc_motor_model

from conftest import scalar_model


def test_fit_metric_values():
    z = np.array([0.0, 1.0, 2.0])
    assert fit_metric(z, z) == 100.0
    assert fit_metric(z, np.full(3, 1.0)) == pytest.approx(0.0)
    assert fit_metric(z, np.zeros(3)) == pytest.approx(-58.11388300841895, rel=1e-14)


def test_fit_metric_errors():
    with pytest.raises(UndefinedFitError):
        fit_metric([1.0, 1.0], [0.0, 1.0])
    with pytest.raises(ValueError):
        fit_metric([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        fit_metric([1.0], [1.0])


def test_run_rngs_are_reproducible_and_distinct():
    a = [g.standard_normal() for g in run_rngs(7, 3)]
    b = [g.standard_normal() for g in run_rngs(7, 3)]
    assert a == b
    assert len(set(a)) == 3


def test_simulate_deterministic_and_noise_level():
    m = make_dc_motor_model(30.0)
    s1 = simulate(m, 50, 9)
    s2 = simulate(m, 50, 9)
    for a, b in zip(s1, s2):
        np.testing.assert_array_equal(a, b)
    big = scalar_model(A=0.5, gamma=4.0)
    _, y, z = simulate(big, 100_000, 1)
    assert np.var(y - z) == pytest.approx(4.0, rel=0.02)


def test_simulate_respects_dynamics():
    m = scalar_model(A=0.5, Q=0.0, P0=0.0, mu=8.0)
    states, _, clean = simulate(m, 4, 0)
    np.testing.assert_allclose(clean, [8.0, 4.0, 2.0, 1.0])


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(experiment="nope", seed=0),
        dict(experiment="spline", seed=0, runs=0),
        dict(experiment="spline", seed=0, samples=1),
        dict(experiment="spline", seed=0, gamma_lo=10.0, gamma_hi=1.0),
        dict(experiment="spline", seed=0, gamma_count=1),
        dict(experiment="spline", seed=0, oracle_every=0),
        dict(experiment="sysid", seed=0, alphas=(0.5, 1.0)),
        dict(experiment="spline", seed=0, noise_std=-1.0),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kwargs)


def test_config_defaults_per_experiment():
    assert ExperimentConfig("spline", 0).samples == 400
    assert ExperimentConfig("spline", 0).noise_std == 0.3
    assert ExperimentConfig("sysid", 0).gamma_count == 20
    assert ExperimentConfig("mismatch", 0).gamma_hi == 1e4
    assert ExperimentConfig("sysid", 0, alphas=(0.9, 0.5)).alphas == (0.5, 0.9)


def test_eval_times():
    cfg = ExperimentConfig("spline", 0, samples=25, oracle_every=10)
    assert cfg.eval_times() == [10, 20, 25]
    assert ExperimentConfig("spline", 0, samples=25, oracle_every=100).eval_times() == [25]


def small_spline(**kw):
    base = dict(experiment="spline", seed=5, runs=2, samples=60, gamma_count=15, oracle_every=30)
    base.update(kw)
    return ExperimentConfig(**base)


def test_spline_demo_oracle_dominates_gcv():
    runs = run_spline_demo(small_spline())
    assert len(runs) == 2
    for r in runs:
        g, o = r.series["gcv"], r.series["oracle"]
        np.testing.assert_array_equal(g.times, [30, 60])
        assert np.all(o.fits >= g.fits - 1e-12)
        assert set(g.params["gamma"]) <= set(small_spline().gammas)


def test_spline_demo_deterministic():
    a = run_spline_demo(small_spline(runs=1))[0]
    b = run_spline_demo(small_spline(runs=1))[0]
    np.testing.assert_array_equal(a.measurements, b.measurements)
    assert a.final_fits() == b.final_fits()


def test_nearly_noiseless_spline_picks_smallest_gamma():
    cfg = ExperimentConfig("spline", 1, noise_std=1e-6)
    r = run_spline_demo(cfg, times=[cfg.samples])[0]
    assert r.series["gcv"].params["gamma"][0] == cfg.gammas[0]
    assert r.series["oracle"].params["gamma"][0] == cfg.gammas[0]
    assert r.series["gcv"].final > 99.0


def test_mismatch_demo_has_nominal_series():
    cfg = ExperimentConfig("mismatch", 1, runs=1, samples=40, gamma_count=10, oracle_every=40)
    r = run_mismatch_demo(cfg)[0]
    assert set(r.series) == {"gcv", "oracle", "nominal"}
    assert r.series["oracle"].final >= r.series["gcv"].final - 1e-12


def test_random_impulse_response_is_stable(rng):
    for _ in range(20):
        g = random_impulse_response(rng, 300)
        assert np.all(np.isfinite(g))
        assert np.abs(g[-50:]).max() <= 1e-3 * np.abs(g).max() + 1e-12


def test_sysid_demo_small(tmp_path):
    cfg = ExperimentConfig("sysid", 4, runs=1, samples=40, fir_length=20, gamma_count=5, alphas=(0.5, 0.9))
    r = run_sysid_demo(cfg)[0]
    s = r.series["gcv"]
    assert len(s.fits) == 40
    assert s.fits[-1] > s.fits[4]
    # a response file replaces the random generator
    path = tmp_path / "g.csv"
    np.savetxt(path, np.vstack([0.8 ** np.arange(20)]), delimiter=",")
    r2 = run_sysid_demo(dataclasses.replace(cfg, response_file=str(path)))[0]
    np.testing.assert_array_equal(r2.truth, 0.8 ** np.arange(20))
    with pytest.raises(ConfigError):
        run_sysid_demo(dataclasses.replace(cfg, response_file=str(path), runs=2))


def test_run_experiment_dispatch():
    runs = run_experiment(small_spline(runs=1))
    assert "oracle" in runs[0].series
