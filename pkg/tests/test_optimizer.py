import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize as sopt

from cfmimo.closed_form_se import assemble_sinr, build_cache, optimal_lsfd, sld_weights
from cfmimo.optimizer import (LN2, AffineSinrCoeffs, alternate_with_lsfd,
                              closed_form_power_update, extract_affine_coeffs, gamma_update,
                              initial_power, lagrange_multiplier, objective, objective_gradient,
                              optimize_power, run_algorithm1, run_mm_projected_gradient,
                              solve_p2_projected_gradient, surrogate_gradient, surrogate_value,
                              y_update)
from cfmimo.scenario import build_scenario
from conftest import small_config


@st.composite
def coeff_sets(draw, max_k=5):
    K = draw(st.integers(1, max_k))
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    d = rng.uniform(0.1, 10, K) * 10 ** rng.uniform(-1, 2, K)
    omega0 = rng.uniform(0.01, 1, K)
    omega = rng.uniform(0, 2, (K, K)) * (rng.uniform(size=(K, K)) < 0.8)
    return AffineSinrCoeffs(d=d, omega0=omega0, omega=omega, p_max=float(rng.uniform(0.5, 2)))


def scenario_coeffs(seed, profile="rf", mode="lsfd", n_off=0):
    cfg = small_config(profile, M=4, K=4, seed=seed, velocities=212 / 3.6)
    cache = build_cache(build_scenario(cfg))
    t = cache.terms(cfg.anchor + n_off)
    p0 = np.full(cfg.K, cfg.p_max / 2)
    a = optimal_lsfd(t, p0) if mode == "lsfd" else sld_weights(t)
    return cache, t, a, extract_affine_coeffs(t, a, cfg.p_max)


# ---------------------------------------------------------------------------
# affine regrouping
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("profile", ["ideal", "rf_dynamic_adc", "one_bit"])
def test_affine_coeffs_reproduce_sinr_parts(profile):
    cache, t, a, co = scenario_coeffs(3, profile)
    rng = np.random.default_rng(0)
    for _ in range(10):
        p = rng.uniform(0, co.p_max, len(co.d))
        Delta, Omega, _ = assemble_sinr(t, a, p)
        np.testing.assert_allclose(co.interference(p), Omega, rtol=1e-10)
        np.testing.assert_allclose(co.desired(p), Delta, rtol=1e-10)


def test_affine_slopes_match_finite_differences():
    cache, t, a, co = scenario_coeffs(5, "rf_dynamic_adc")
    K = len(co.d)
    p = np.full(K, 0.05)
    h = 1e-3
    for i in range(K):
        e = np.zeros(K)
        e[i] = h
        slope = (assemble_sinr(t, a, p + e)[1] - assemble_sinr(t, a, p - e)[1]) / (2 * h)
        np.testing.assert_allclose(slope, co.omega[:, i], rtol=1e-7,
                                   atol=1e-9 * np.abs(co.omega).max())
        dslope = (assemble_sinr(t, a, p + e)[0][i] - assemble_sinr(t, a, p - e)[0][i]) / (2 * h)
        assert dslope == pytest.approx(co.d[i], rel=1e-7)
    assert np.all(co.omega >= 0) and np.all(co.omega0 >= 0)


def test_single_ideal_static_ue_constant_is_noise():
    cfg = small_config("ideal", K=1, tau_p=1, velocities=0.0)
    cache = build_cache(build_scenario(cfg))
    t = cache.terms(cfg.anchor)
    a = optimal_lsfd(t, [cfg.p_max])
    co = extract_affine_coeffs(t, a, cfg.p_max)
    q = np.real(np.sum(np.abs(a[0]) ** 2 * t.Q[0]))
    assert co.omega0[0] == pytest.approx(cfg.noise_power * q, rel=1e-12)


# ---------------------------------------------------------------------------
# auxiliary variables and surrogates
# ---------------------------------------------------------------------------

def unit_coeffs():
    return AffineSinrCoeffs(d=np.array([1.0]), omega0=np.array([1.0]),
                            omega=np.zeros((1, 1)), p_max=2.0)


def test_y_and_gamma_examples():
    co = unit_coeffs()
    p = np.array([1.0])
    assert y_update(p, co, gamma=np.array([0.0]))[0] == pytest.approx(0.5)
    assert gamma_update(p, co)[0] == 1.0
    assert lagrange_multiplier(p, co)[0] == pytest.approx(1 / (2 * LN2))
    zero = np.array([0.0])
    assert y_update(zero, co)[0] == 0 and gamma_update(zero, co)[0] == 0


@given(coeff_sets(), st.integers(0, 2**31))
def test_c1_tangency_and_lower_bound(co, seed):
    rng = np.random.default_rng(seed)
    K = len(co.d)
    p = rng.uniform(0, co.p_max, K)
    f = objective(p, co)
    assert surrogate_value(p, y_update(p, co), co) == pytest.approx(f, rel=1e-12, abs=1e-12)
    g = gamma_update(p, co)
    yd = y_update(p, co, g)
    assert surrogate_value(p, yd, co, g) == pytest.approx(f, rel=1e-12, abs=1e-12)
    # any y gives a lower bound on the true objective
    for _ in range(5):
        y = rng.uniform(0, 2 * y_update(p, co).max() + 1e-3, K)
        assert surrogate_value(p, y, co) <= f + 1e-12
        gr = rng.uniform(0, 3, K)
        assert surrogate_value(p, y, co, gr) <= f + 1e-12


@given(coeff_sets(), st.integers(0, 2**31))
def test_c2_gradient_match(co, seed):
    rng = np.random.default_rng(seed)
    p = rng.uniform(0.1, 0.9, len(co.d)) * co.p_max
    y = y_update(p, co)
    g_sur = surrogate_gradient(p, y, co)
    g_obj = objective_gradient(p, co)
    np.testing.assert_allclose(g_sur, g_obj, rtol=1e-9, atol=1e-12)
    h = 1e-6 * co.p_max
    fd = np.array([(objective(p + h * e, co) - objective(p - h * e, co)) / (2 * h)
                   for e in np.eye(len(p))])
    np.testing.assert_allclose(g_obj, fd, rtol=1e-6, atol=1e-6 * np.abs(fd).max())


def test_dual_bracket_identity():
    co = AffineSinrCoeffs(d=np.array([3.0, 0.5]), omega0=np.array([0.2, 1.0]),
                          omega=np.array([[0.1, 0.4], [0.3, 0.2]]), p_max=1.0)
    p = np.array([0.3, 0.8])
    g = gamma_update(p, co)
    y = y_update(p, co, g)
    De, Om = co.desired(p), co.interference(p)
    bracket = np.log1p(g) - g + 2 * y * np.sqrt((1 + g) * De) - y**2 * (De + Om)
    np.testing.assert_allclose(bracket / LN2, np.log2(1 + g), rtol=1e-13)


def test_surrogate_domain_sentinel():
    co = unit_coeffs()
    assert surrogate_value(np.array([1.0]), np.array([10.0]), co) == -math.inf
    assert surrogate_value(np.array([1.0]), np.array([0.0]), co) == 0.0


# ---------------------------------------------------------------------------
# inner solvers and updates
# ---------------------------------------------------------------------------

def test_p2_single_user_matches_golden_section():
    co = AffineSinrCoeffs(d=np.array([2.0]), omega0=np.array([0.5]), omega=np.array([[1.5]]),
                          p_max=1.0)
    y = np.array([0.8])
    p = solve_p2_projected_gradient(co, y, np.array([0.1]))
    res = sopt.minimize_scalar(lambda q: -surrogate_value(np.array([q]), y, co),
                               bounds=(0, 1), method="bounded",
                               options={"xatol": 1e-12})
    assert 0 < res.x < 1
    assert p[0] == pytest.approx(res.x, abs=1e-6)


def test_p2_boundary_optimum():
    co = AffineSinrCoeffs(d=np.array([1e6]), omega0=np.array([1.0]), omega=np.array([[0.0]]),
                          p_max=0.7)
    p = solve_p2_projected_gradient(co, np.array([1e-4]), np.array([0.1]))
    assert p[0] == 0.7


@given(coeff_sets(), st.integers(0, 2**31))
def test_p2_never_decreases_surrogate(co, seed):
    rng = np.random.default_rng(seed)
    p0 = rng.uniform(0, co.p_max, len(co.d))
    y = y_update(p0, co)
    p = solve_p2_projected_gradient(co, y, p0)
    assert np.all((p >= 0) & (p <= co.p_max))
    assert surrogate_value(p, y, co) >= surrogate_value(p0, y, co) - 1e-12


def test_closed_form_update_noise_only():
    co = AffineSinrCoeffs(d=np.array([4.0]), omega0=np.array([2.0]), omega=np.zeros((1, 1)),
                          p_max=10.0)
    y, g = np.array([0.3]), np.array([0.5])
    # maximize 2y sqrt((1+g) d p) - y^2 d p: p = (1+g) / (y^2 d)
    assert closed_form_power_update(y, g, co)[0] == pytest.approx(1.5 / (0.09 * 4), rel=1e-9)
    res = sopt.minimize_scalar(lambda q: -surrogate_value(np.array([q]), y, co, g),
                               bounds=(0, 10), method="bounded", options={"xatol": 1e-12})
    assert closed_form_power_update(y, g, co)[0] == pytest.approx(res.x, rel=1e-6)


def test_closed_form_update_limits():
    co = AffineSinrCoeffs(d=np.array([1.0, 1.0]), omega0=np.ones(2),
                          omega=np.array([[0.0, 0.0], [1e12, 0.0]]), p_max=1.0)
    p = closed_form_power_update(np.array([1.0, 1.0]), np.array([1.0, 1.0]), co)
    assert p[0] < 1e-20
    zero = AffineSinrCoeffs(d=np.zeros(1), omega0=np.ones(1), omega=np.zeros((1, 1)), p_max=0.3)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        assert closed_form_power_update(np.zeros(1), np.zeros(1), zero)[0] == 0.3
    assert any(issubclass(x.category, RuntimeWarning) for x in w)


# ---------------------------------------------------------------------------
# full algorithms
# ---------------------------------------------------------------------------

@given(coeff_sets())
def test_mm_monotone_and_feasible(co):
    p0 = initial_power(co, len(co.d))
    for res in (run_algorithm1(co, p0, max_iters=300), run_mm_projected_gradient(co, p0)):
        h = np.array(res.history)
        assert np.all(np.diff(h) >= -1e-10 * max(1.0, abs(h[-1])))
        assert np.all((res.p >= 0) & (res.p <= co.p_max))
        assert h[-1] >= objective(np.full(len(co.d), co.p_max), co) - 1e-10


def test_algorithm1_from_optimum_stops_quickly():
    _, _, _, co = scenario_coeffs(2)
    opt = run_algorithm1(co, initial_power(co, 4), max_iters=5000)
    assert opt.converged
    again = run_algorithm1(co, opt.p)
    assert again.iterations <= 2


def test_algorithm1_single_user_golden_section():
    co = AffineSinrCoeffs(d=np.array([2.0]), omega0=np.array([0.3]), omega=np.array([[0.4]]),
                          p_max=1.5)
    res = run_algorithm1(co, np.array([0.2]), max_iters=500)
    gs = sopt.minimize_scalar(lambda q: -objective(np.array([q]), co), bounds=(0, 1.5),
                              method="bounded", options={"xatol": 1e-12})
    assert res.p[0] == pytest.approx(gs.x, abs=1e-5)


@pytest.mark.parametrize("seed", range(100))
def test_scenarios_monotone_and_beat_full_power(seed):
    _, _, _, co = scenario_coeffs(seed, mode="sld" if seed % 2 else "lsfd")
    res = optimize_power(co, "closed_form", max_iters=100)
    h = np.array(res.history)
    assert np.all(np.diff(h) >= -1e-10)
    assert h[-1] >= objective(np.full(4, co.p_max), co) - 1e-12


def test_unknown_method():
    with pytest.raises(ValueError):
        optimize_power(unit_coeffs(), "cvx")


def test_alternation_rounds_do_not_hurt():
    cfg = small_config("rf", M=5, K=4, seed=8, velocities=212 / 3.6)
    cache = build_cache(build_scenario(cfg))
    p0, a0, h0 = alternate_with_lsfd(cache, rounds=0, max_iters=300)
    p1, a1, h1 = alternate_with_lsfd(cache, rounds=1, max_iters=300)
    p3, a3, h3 = alternate_with_lsfd(cache, rounds=3, max_iters=300)
    assert len(h0) == 1 and len(h3) == 4
    assert np.all(np.diff(h3) >= -1e-10)
    assert h3[-1] >= h1[-1] - 1e-10 >= h0[-1] - 2e-10
    t = cache.terms(cfg.anchor)
    np.testing.assert_allclose(a3, optimal_lsfd(t, p3))
    ps, as_, hs = alternate_with_lsfd(cache, rounds=2, mode="sld", max_iters=300)
    assert np.all(as_ == 1) and len(hs) == 1
