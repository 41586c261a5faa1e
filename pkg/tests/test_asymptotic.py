import numpy as np
import pytest

from gcvfilter.asymptotic import (
    SolverError,
    asymptotic_gcv_init,
    asymptotic_gcv_run,
    asymptotic_gcv_step,
    dare_residual,
    model_stationary_gains,
    smoothing_ratio,
    solve_dare,
    solve_lyapunov,
    spectral_radius,
    stationary_gains,
)
from gcvfilter.checks import bench_model
from gcvfilter.gcv import GcvState, gcv_run, gcv_step
from gcvfilter.kalman import KalmanState, kf_step
from gcvfilter.statespace import make_dc_motor_model, make_spline_model

from conftest import scalar_model

PHI = (1 + np.sqrt(5)) / 2


def test_dare_zero_process_noise():
    P = solve_dare([[0.5]], [1.0], [[0.0]], 1.0)
    assert P[0, 0] == pytest.approx(0.0, abs=1e-12)


def test_dare_random_walk_golden_ratio():
    sol = stationary_gains([[1.0]], [1.0], [[1.0]], 1.0)
    assert sol.Pbar[0, 0] == pytest.approx(PHI, rel=1e-12)
    assert sol.Kbar[0] == pytest.approx(1 / PHI, rel=1e-12)
    F = 1 - 1 / PHI
    assert sol.Sigmabar[0, 0] == pytest.approx((1 / PHI) ** 2 / (1 - F**2), rel=1e-12)
    assert sol.smoothing_ratio == pytest.approx(1 / np.sqrt(5), rel=1e-10)
    assert sol.spectral_radius == pytest.approx(F, rel=1e-12)


def test_lyapunov_scalar_and_zero():
    assert solve_lyapunov([[0.5]], [[1.0]])[0, 0] == pytest.approx(4 / 3, rel=1e-14)
    M = np.array([[2.0, 1.0], [1.0, 3.0]])
    np.testing.assert_array_equal(solve_lyapunov(np.zeros((2, 2)), M), M)


def test_lyapunov_rejects_unstable():
    with pytest.raises(ValueError):
        solve_lyapunov([[1.0]], [[1.0]])


def test_dare_rejects_bad_gamma():
    with pytest.raises(ValueError):
        solve_dare([[1.0]], [1.0], [[1.0]], 0.0)


def test_dc_motor_matches_iterated_recursion():
    m = make_dc_motor_model(30.0)
    sol = model_stationary_gains(m)
    assert np.linalg.norm(dare_residual(sol.Pbar, m.transitions, m.observations, m.process_covs, 30.0)) < 1e-8
    assert sol.spectral_radius < 1
    assert sol.spectral_radius == pytest.approx(
        spectral_radius(m.transitions - np.outer(sol.Kbar, m.observations))
    )
    states = gcv_run(m, np.zeros(3000))
    np.testing.assert_allclose(states[-1].P, sol.Pbar, rtol=1e-8)
    np.testing.assert_allclose(states[-1].Sigma, sol.Sigmabar, rtol=1e-8)
    assert 0 < sol.smoothing_ratio < 1


@pytest.mark.parametrize("P0", [0.0, 1.0, 10.0])
def test_convergence_from_several_priors(P0):
    m = make_dc_motor_model(30.0, prior_cov=P0 * np.eye(2))
    sol = model_stationary_gains(m)
    st = KalmanState.from_prior(m)
    for _ in range(2000):
        st = kf_step(st, m, 0.0)
    np.testing.assert_allclose(st.P, sol.Pbar, rtol=1e-6)


def test_smoothing_ratio_function_matches_field():
    m = make_dc_motor_model(5.0)
    sol = model_stationary_gains(m)
    assert smoothing_ratio(sol, m.observations, 5.0) == pytest.approx(sol.smoothing_ratio)


def test_smoothing_ratio_limits():
    # little noise: nearly every measurement is fitted; lots of noise: almost none
    lo = stationary_gains([[0.9]], [1.0], [[1.0]], 1e-6).smoothing_ratio
    hi = stationary_gains([[0.9]], [1.0], [[1.0]], 1e6).smoothing_ratio
    assert lo > 0.99
    assert hi < 0.01


def test_cubic_spline_ratio_near_one_third():
    sol = model_stationary_gains(bench_model())
    assert sol.smoothing_ratio == pytest.approx(1 / 3, abs=1e-3)


def test_requires_time_invariant_model():
    m = make_spline_model(2, [0.0, 0.5, 1.5], 1.0)
    with pytest.raises(ValueError):
        model_stationary_gains(m)


def test_asymptotic_agrees_with_exact_in_the_long_run(rng):
    m = make_dc_motor_model(30.0)
    y = rng.standard_normal(5000) * 10
    exact = gcv_run(m, y)[-1]
    approx = asymptotic_gcv_run(m, y)[-1]
    assert approx.dof / 5000 == pytest.approx(exact.dof / 5000, abs=1e-3)
    assert approx.gcv == pytest.approx(exact.gcv, rel=1e-3)


def test_fixed_point_coincides_with_exact_step(rng):
    m = make_dc_motor_model(30.0)
    sol = model_stationary_gains(m)
    a = asymptotic_gcv_init(m, sol, 1.0)
    # exact filter started at the stationary point stays there
    e = GcvState(a.xhat, a.zeta, sol.Pbar.copy(), sol.Sigmabar.copy(), a.dof, a.ssr, a.gcv, 1, a.y, a.c)
    for y in rng.standard_normal(50):
        a = asymptotic_gcv_step(a, m, sol.Kbar, sol.Gbar, y)
        e = gcv_step(e, m, y)
        np.testing.assert_allclose(e.P, sol.Pbar, rtol=1e-9)
        np.testing.assert_allclose(e.Sigma, sol.Sigmabar, rtol=1e-8)
        np.testing.assert_allclose(a.xhat, e.xhat, rtol=1e-9, atol=1e-12)
        assert a.dof == pytest.approx(e.dof, rel=1e-9)
        assert a.ssr == pytest.approx(e.ssr, rel=1e-8)


def test_zero_process_noise_stationary_filter():
    m = scalar_model(A=0.5, Q=0.0)
    sol = model_stationary_gains(m)
    assert sol.Kbar[0] == pytest.approx(0.0, abs=1e-12)
    assert sol.smoothing_ratio == pytest.approx(0.0, abs=1e-12)
    states = asymptotic_gcv_run(m, [1.0, 2.0, 3.0], sol)
    assert states[-1].ssr == pytest.approx(1.0 + (2 - 0) ** 2 + 9.0)


def test_empty_run_rejected(random_walk):
    with pytest.raises(ValueError):
        asymptotic_gcv_run(random_walk, [])


def test_solver_error_is_runtime_error():
    assert issubclass(SolverError, RuntimeError)
