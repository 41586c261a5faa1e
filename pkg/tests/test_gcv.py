import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gcvfilter.checks import random_data, random_model
from gcvfilter.gcv import gcv_init, gcv_iter, gcv_run, gcv_score, gcv_step
from gcvfilter.kalman import KalmanState, kf_step
from gcvfilter.oracle import batch_gcv

from conftest import scalar_model


def test_init_hand_example():
    m = scalar_model(P0=1.5, gamma=1.0)
    s = gcv_init(m, 3.0)
    assert s.dof == pytest.approx(0.6, abs=1e-15)
    assert s.ssr == pytest.approx(1.44, abs=1e-14)
    assert s.gcv == pytest.approx(9.0, abs=1e-12)
    assert s.k == 1
    np.testing.assert_array_equal(s.Sigma, 0.0)
    np.testing.assert_array_equal(s.zeta, 0.0)


def test_init_zero_prior_has_no_dof():
    s = gcv_init(scalar_model(P0=0.0, gamma=2.0), 5.0)
    assert s.dof == 0.0
    assert s.ssr == pytest.approx(25.0)
    assert s.gcv == pytest.approx(25.0)


def test_init_prior_equal_to_noise_gives_half_dof():
    s = gcv_init(scalar_model(P0=3.0, gamma=3.0), 1.0)
    assert s.dof == pytest.approx(0.5)


def test_init_uses_prior_mean():
    s = gcv_init(scalar_model(P0=1.0, gamma=1.0, mu=2.0), 2.0)
    assert s.ssr == 0.0


def test_first_step_gain():
    # Sigma_1 = 0 so G_1 = -K_1 / s_1
    m = scalar_model(A=0.9, P0=2.0, gamma=0.5, Q=0.3)
    s1 = gcv_init(m, 1.0)
    s2 = gcv_step(s1, m, 0.0)
    s = 2.0 + 0.5
    K = 0.9 * 2.0 / s
    G = -K / s
    assert s2.xhat[0] == pytest.approx(K * 1.0)
    assert s2.zeta[0] == pytest.approx(G * 1.0)
    assert s2.Sigma[0, 0] == pytest.approx(K**2)


def test_random_walk_frozen_values(random_walk):
    states = gcv_run(random_walk, [1.0, 0.0, 2.0])
    last = states[-1]
    assert last.dof == pytest.approx(19 / 13, rel=1e-12)
    assert last.ssr == pytest.approx(181 / 169, rel=1e-12)
    assert abs(last.gcv - 1.3575) < 1e-10
    assert last.gcv == pytest.approx(3 * (181 / 169) / (3 - 19 / 13) ** 2, rel=1e-12)


def test_prediction_matches_kalman_filter(model_battery, rng):
    for m in model_battery:
        y = random_data(rng, m, 30)
        kf = KalmanState.from_prior(m)
        for i, s in enumerate(gcv_run(m, y)):
            np.testing.assert_allclose(s.xhat, kf.xhat, rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose(s.P, kf.P, rtol=1e-10, atol=1e-12)
            kf = kf_step(kf, m, y[i])


def test_matches_batch_oracle(model_battery, rng):
    for m in model_battery:
        y = random_data(rng, m, 40)
        for t in (1, 7, 40):
            rec = gcv_run(m, y[:t])[-1]
            ref = batch_gcv(m, y[:t])
            assert rec.dof == pytest.approx(ref.dof, rel=1e-8)
            assert rec.ssr == pytest.approx(ref.ssr, rel=1e-8)
            assert rec.gcv == pytest.approx(ref.gcv, rel=1e-8)


def test_identity_fast_path_matches_general_path(rng):
    from gcvfilter.statespace import StateSpaceModel, fir_regressors, make_fir_model

    phi = fir_regressors(rng.standard_normal(30), 6)
    fast = make_fir_model(phi, 0.7, 6, 0.4)
    # a stack of identity matrices is not detected, so it takes the general path
    stack = np.repeat(np.eye(6)[None], 29, axis=0)
    slow = StateSpaceModel(stack, phi, np.zeros((29, 6, 6)), np.zeros(6), fast.prior_cov, 0.4)
    assert fast.identity_transition and not slow.identity_transition
    y = rng.standard_normal(30)
    a = gcv_run(fast, y)
    b = gcv_run(slow, y)
    for sa, sb in zip(a, b):
        np.testing.assert_allclose(sa.P, sb.P, rtol=1e-10, atol=1e-13)
        np.testing.assert_allclose(sa.Sigma, sb.Sigma, rtol=1e-10, atol=1e-13)
        assert sa.gcv == pytest.approx(sb.gcv, rel=1e-11)
        np.testing.assert_array_equal(sa.P, sa.P.T)
    assert a[-1].gcv == pytest.approx(batch_gcv(fast, y).gcv, rel=1e-9)


def test_invariants_along_trajectory(model_battery, rng):
    for m in model_battery:
        y = random_data(rng, m, 60)
        for s in gcv_run(m, y):
            assert -1e-12 <= s.dof <= s.k + 1e-12
            assert s.ssr >= -1e-12
            assert s.gcv * (s.k - s.dof) ** 2 == pytest.approx(s.k * s.ssr, rel=1e-12)
            np.testing.assert_array_equal(s.Sigma, s.Sigma.T)
            np.testing.assert_array_equal(s.P, s.P.T)
            scale = max(1.0, np.abs(s.Sigma).max())
            assert np.linalg.eigvalsh(s.Sigma).min() >= -1e-9 * scale


def test_huge_gamma_reduces_to_prior():
    m = scalar_model(A=0.5, P0=1.0, gamma=1e12)
    y = [1.0, -2.0, 3.0]
    s = gcv_run(m, y)[-1]
    assert s.dof == pytest.approx(0.0, abs=1e-9)
    # with the prior mean 0 the residuals are the data themselves
    assert s.ssr == pytest.approx(14.0, rel=1e-9)
    assert s.gcv == pytest.approx(14.0 / 3.0, rel=1e-9)


def test_gcv_score_formula():
    assert gcv_score(4, 2.0, 2.0) == pytest.approx(2.0)


def test_gcv_iter_is_lazy_and_matches_run(random_walk):
    y = [0.5, 1.0, -1.0, 2.0]
    lazy = list(gcv_iter(random_walk, iter(y)))
    eager = gcv_run(random_walk, y)
    assert [s.gcv for s in lazy] == [s.gcv for s in eager]


def test_empty_measurements_rejected(random_walk):
    with pytest.raises(ValueError):
        gcv_run(random_walk, [])


def test_observation_row_override():
    m = scalar_model()
    s = gcv_init(m, 1.0, c1=[2.0])
    assert s.dof == pytest.approx(1 - 1 / 5)
    with pytest.raises(ValueError):
        gcv_init(m, 1.0, c1=[1.0, 2.0])
    with pytest.raises(ValueError):
        gcv_step(s, m, 1.0, c_next=[1.0, 2.0])


def test_nonfinite_measurements_propagate(random_walk):
    s = gcv_step(gcv_init(random_walk, 1.0), random_walk, np.nan)
    assert np.isnan(s.gcv)


def test_filtered_state_matches_kalman_update():
    m = scalar_model(P0=1.0, gamma=1.0, Q=0.0)
    s = gcv_init(m, 2.0)
    assert s.filtered_state(1.0)[0] == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t=st.integers(1, 25))
def test_property_recursive_equals_batch(seed, t):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    y = random_data(rng, m, t)
    rec = gcv_run(m, y)[-1]
    ref = batch_gcv(m, y)
    assert rec.dof == pytest.approx(ref.dof, rel=1e-7, abs=1e-10)
    assert rec.ssr == pytest.approx(ref.ssr, rel=1e-7, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.floats(0.1, 100.0))
def test_property_scaling_data_and_prior(seed, c):
    # multiplying y, mu by c and P0, Q, gamma by c^2 leaves dof fixed and scales ssr by c^2
    from gcvfilter.statespace import StateSpaceModel

    rng = np.random.default_rng(seed)
    m = random_model(rng)
    y = random_data(rng, m, 15)
    m2 = StateSpaceModel(m.transitions, m.observations, c**2 * m.process_covs, c * m.prior_mean,
                         c**2 * m.prior_cov, c**2 * m.noise_var)
    a = gcv_run(m, y)[-1]
    b = gcv_run(m2, c * y)[-1]
    assert b.dof == pytest.approx(a.dof, rel=1e-9)
    assert b.ssr == pytest.approx(c**2 * a.ssr, rel=1e-8)
