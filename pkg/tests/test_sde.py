"""Local OU limits, stationary fluctuation levels, escape law, equator SDE."""

import math

import numpy as np
import pytest
from scipy.stats import norm

from oja_diffusion import (
    OuSpec,
    chain_rng,
    equator_drift_coeff,
    equator_ensemble_second_moment,
    make_spectrum,
    ou_ensemble_moments,
    ou_mean_cov,
    ou_stationary_var,
    phase1_exit_law,
    simulate_equator_sde,
    simulate_ou,
    stationary_sin2,
)

SPEC2 = make_spectrum([2.0, 1.0])


def test_ouspec_coefficients():
    sp = make_spectrum([3.0, 2.0, 1.0])
    ou = OuSpec(spec=sp, k=1)
    np.testing.assert_array_equal(ou.other_lambdas, [2.0, 1.0])
    np.testing.assert_array_equal(ou.drift_rates, [1.0, 2.0])
    np.testing.assert_allclose(ou.noise_scales, [math.sqrt(6.0), math.sqrt(3.0)])
    ou = OuSpec(spec=sp, k=2)
    np.testing.assert_array_equal(ou.other_lambdas, [3.0, 1.0])
    np.testing.assert_array_equal(ou.drift_rates, [-1.0, 1.0])
    with pytest.raises(ValueError):
        OuSpec(spec=sp, k=0)
    with pytest.raises(ValueError):
        OuSpec(spec=sp, k=4)


def test_mean_cov_closed_form():
    ou = OuSpec(spec=SPEC2, k=1)
    mean, var = ou_mean_cov(ou, 0.3, 3.0)
    assert mean[0] == pytest.approx(0.3 * math.exp(-3.0), rel=1e-14)
    # var(t) = lam1 lam2 (1 - e^{-2 gap t}) / (2 gap) = 1 - e^{-6}
    assert var[0] == pytest.approx(-math.expm1(-6.0), rel=1e-14)
    mean, var = ou_mean_cov(ou, 0.3, 0.0)
    assert mean[0] == 0.3 and var[0] == 0.0


def test_mean_cov_zero_rate_is_linear_in_t():
    # Around the middle axis of [2,1,1] the rate toward the tied eigenvalue
    # vanishes: variance grows like lam_k lam_i t and the mean freezes.
    sp = make_spectrum([2.0, 1.0, 1.0])
    ou = OuSpec(spec=sp, k=2)
    mean, var = ou_mean_cov(ou, np.array([0.1, 0.2]), 1.7)
    assert var[1] == pytest.approx(1.0 * 1.0 * 1.7, rel=1e-14)
    assert mean[1] == pytest.approx(0.2, rel=1e-14)
    # the coordinate toward lambda_1 is unstable (rate -1): mean inflates
    assert mean[0] == pytest.approx(0.1 * math.exp(1.7), rel=1e-12)


def test_stationary_var():
    ou = OuSpec(spec=SPEC2, k=1)
    np.testing.assert_allclose(ou_stationary_var(ou), [1.0], rtol=1e-15)
    with pytest.raises(ValueError):
        ou_stationary_var(OuSpec(spec=SPEC2, k=2))


def test_simulate_ou_reproducible():
    ou = OuSpec(spec=SPEC2, k=1)
    a = simulate_ou(ou, 0.3, 1.0, 1e-3, seed=5)
    b = simulate_ou(ou, 0.3, 1.0, 1e-3, seed=5)
    np.testing.assert_array_equal(a.states, b.states)
    assert a.seed == 5
    assert a.states.shape == (1001, 1)
    assert a.times[-1] == pytest.approx(1.0)
    c = simulate_ou(ou, 0.3, 1.0, 1e-3, seed=6)
    assert not np.array_equal(a.states, c.states)


def test_simulate_ou_zero_diffusion_is_euler_decay():
    ou = OuSpec(spec=SPEC2, k=1)
    dt = 1e-3
    path = simulate_ou(ou, 1.0, 0.1, dt, seed=0, diffusion_scale=0.0)
    u = 1.0
    for n in range(1, 101):
        u = u + (-1.0 * u) * dt  # drift rate lam1 - lam2 = 1
        assert path.states[n, 0] == pytest.approx(u, rel=1e-12)


def test_simulate_ou_dt_validation():
    ou = OuSpec(spec=SPEC2, k=1)
    with pytest.raises(ValueError, match="dt"):
        simulate_ou(ou, 0.3, 1.0, 0.5, seed=0)


def test_ou_ensemble_moments_match_closed_form():
    ou = OuSpec(spec=SPEC2, k=1)
    grid = [0.5, 1.0]
    m = 400
    dt = 1e-3
    times, mean, var = ou_ensemble_moments(ou, 0.3, grid, dt, m, seed=7)
    np.testing.assert_allclose(times, grid)
    for j, t in enumerate(grid):
        cm, cv = ou_mean_cov(ou, 0.3, t)
        se_mean = math.sqrt(cv[0] / m)
        se_var = cv[0] * math.sqrt(2.0 / (m - 1))
        assert abs(mean[j, 0] - cm[0]) <= 5 * se_mean + 5 * dt * (abs(cm[0]) + 1)
        assert abs(var[j, 0] - cv[0]) <= 5 * se_var + 5 * dt * (cv[0] + 1)


def test_ou_ensemble_duplicate_grid_times():
    ou = OuSpec(spec=SPEC2, k=1)
    times, mean, var = ou_ensemble_moments(ou, 0.3, [1.0, 1.0], 1e-3, 50, seed=3)
    assert mean[0, 0] == mean[1, 0]
    assert var[0, 0] == var[1, 0]


def test_stationary_sin2_values():
    assert stationary_sin2(SPEC2, 1e-3) == pytest.approx(1e-3, rel=1e-14)
    sp = make_spectrum([2.0, 1.0, 1.0])
    assert stationary_sin2(sp, 1e-3) == pytest.approx(2e-3, rel=1e-14)
    sp = make_spectrum([4.0, 1.0])
    beta = 2e-4
    assert stationary_sin2(sp, beta) == pytest.approx(beta * 4.0 / 6.0, rel=1e-14)


def test_phase1_exit_law_reference_values():
    law = phase1_exit_law(SPEC2, k=2, beta=1e-3, delta=0.25)
    assert law.rate == 1.0
    assert law.sigma_w == pytest.approx(1.0, rel=1e-15)
    # N(chi) = (log(sqrt(delta)/(|chi| sigma)) + log(1/beta)/2) / (rate beta)
    expected = (math.log(0.5) + 0.5 * math.log(1e3)) / 1e-3
    assert law.steps_given_chi(1.0) == pytest.approx(expected, rel=1e-13)
    assert expected == pytest.approx(2760.7304589311226, rel=1e-12)
    # the median of |chi| for a standard gaussian
    chi_med = norm.ppf(0.75)
    assert law.median == pytest.approx(law.steps_given_chi(chi_med), rel=1e-13)
    assert law.median == pytest.approx(3154.529258532014, rel=1e-12)
    assert law.quantile(0.10) == pytest.approx(law.steps_given_chi(norm.ppf(0.95)), rel=1e-13)
    assert law.quantile(0.90) == pytest.approx(law.steps_given_chi(norm.ppf(0.55)), rel=1e-13)
    assert law.quantile(0.10) < law.median < law.quantile(0.90)


def test_phase1_exit_law_clamps_and_extremes():
    law = phase1_exit_law(SPEC2, k=2, beta=1e-3, delta=0.25)
    assert law.steps_given_chi(1e9) == 0.0
    assert law.steps_given_chi(0.0) == math.inf


def test_phase1_sample():
    law = phase1_exit_law(SPEC2, k=2, beta=1e-3, delta=0.25)
    draws = law.sample(chain_rng(8, 0), 4000)
    again = law.sample(chain_rng(8, 0), 4000)
    np.testing.assert_array_equal(draws, again)
    assert np.all(draws >= 0.0)
    assert np.median(draws) == pytest.approx(law.median, rel=0.1)


def test_phase1_validation():
    with pytest.raises(ValueError):
        phase1_exit_law(SPEC2, k=1, beta=1e-3, delta=0.25)
    with pytest.raises(ValueError):
        phase1_exit_law(SPEC2, k=2, beta=-1e-3, delta=0.25)
    with pytest.raises(ValueError):
        phase1_exit_law(SPEC2, k=2, beta=1e-3, delta=0.6)


def test_equator_drift_coeff():
    sp = make_spectrum([2.0, 1.0, 0.5])
    assert equator_drift_coeff(sp, np.array([0.0, 1.0, 0.0])) == 1.0
    # convex combination of the tail eigenvalues
    v = np.array([0.0, 0.6, 0.8])
    expected = (1.0 * 0.36 + 0.5 * 0.64) / 1.0
    assert equator_drift_coeff(sp, v) == pytest.approx(expected, rel=1e-14)
    lo = equator_drift_coeff(sp, np.array([0.0, 0.0, 1.0]))
    assert lo == 0.5
    with pytest.raises(ValueError, match="e_1"):
        equator_drift_coeff(sp, np.array([1.0, 0.0, 0.0]))


def test_equator_sde_constant_path_growth():
    # With V frozen at e_2 and no noise, the overlap obeys the Euler
    # recurrence u <- u (1 + gap dt).
    dt = 1e-3
    path = simulate_equator_sde(SPEC2, np.array([0.0, 1.0]), 0.5, 0.1, dt,
                                seed=2, diffusion_scale=0.0)
    u = 0.5
    for n in range(1, 101):
        u = u + 1.0 * u * dt
        assert path.states[n, 0] == pytest.approx(u, rel=1e-12)


def test_equator_sde_callable_path():
    def vee(t):
        return np.array([0.0, math.cos(t), math.sin(t)])

    sp = make_spectrum([2.0, 1.0, 0.5])
    path = simulate_equator_sde(sp, vee, 0.1, 0.5, 1e-3, seed=4)
    assert path.states.shape == (501, 1)
    again = simulate_equator_sde(sp, vee, 0.1, 0.5, 1e-3, seed=4)
    np.testing.assert_array_equal(path.states, again.states)


def test_equator_second_moment_matches_unstable_ou():
    # E[U^2](t) = u0^2 e^{2at} + lam1 lam2 (e^{2at}-1)/(2a) with a = gap = 1.
    m = 600
    dt = 1e-3
    u0 = 0.3
    grid = [0.5, 1.0]
    times, second = equator_ensemble_second_moment(
        SPEC2, np.array([0.0, 1.0]), u0, grid, dt, m, seed=9
    )
    for j, t in enumerate(grid):
        mean = u0 * math.exp(t)
        var = 2.0 * (math.exp(2 * t) - 1.0) / 2.0
        closed = mean**2 + var
        # Var(U^2) = 2 var^2 + 4 mean^2 var for a gaussian U
        se = math.sqrt((2 * var**2 + 4 * mean**2 * var) / m)
        assert abs(second[j] - closed) <= 5 * se + 5 * dt * (closed + 1)
