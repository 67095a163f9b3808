from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from annealed_lyapunov import oracle, theory
from annealed_lyapunov.environment import Atoms, Exponential, Mixture, Pareto, PointMass

Q3 = theory.default_q(3)
PARETO = Pareto(0.5, 1.0)


# f ------------------------------------------------------------------------


def test_f_at_zero_and_plateau():
    assert theory.f_eval(0.0, Q3) == 0.0
    v = theory.f_eval(50.0, 0.6594)
    assert 0.6594 - 1e-8 <= v <= 0.6594


def test_f_two_forms_agree():
    q = 0.659463
    a = theory.f_eval(0.1, q)
    b = q * (1 - math.exp(-0.1)) / (1 - (1 - q) * math.exp(-0.1))
    assert abs(a - b) <= 1e-12
    assert abs(theory.f_alt(0.1, q) - a) <= 1e-15


def test_f_rejects_negative():
    with pytest.raises(ValueError):
        theory.f_eval(-1.0, Q3)


@given(st.floats(1e-8, 1e3))
def test_f_inverse_roundtrip(z):
    y = theory.f_eval(z, Q3)
    if y < Q3 * (1 - 1e-9):
        assert theory.f_inverse(y, Q3) == pytest.approx(z, rel=1e-6)


@given(st.floats(0, 1e4), st.floats(0, 1e4))
def test_f_monotone_and_bounded(x, y):
    lo, hi = sorted((x, y))
    assert theory.f_eval(lo, Q3) <= theory.f_eval(hi, Q3)
    assert theory.f_eval(hi, Q3) <= min(hi, Q3) * (1 + 1e-15) + 1e-300


# rate integrals -------------------------------------------------------------


def test_frak_I_point_mass():
    assert theory.frak_I(0.3, PointMass(2.0), Q3) == pytest.approx(theory.f_eval(0.6, Q3), rel=1e-14)


def test_frak_I_decreases_to_zero():
    vals = [theory.frak_I(b, PARETO, Q3) for b in (1e-1, 1e-2, 1e-3, 1e-4, 1e-6)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-2


def test_frak_I_pareto_dual_quadrature():
    a = theory.frak_I(0.05, PARETO, Q3)
    b = oracle.pareto_rate_integral_mp(0.05, 0.5, 1.0, Q3, "f")
    assert abs(a / b - 1) <= 1e-8


def test_frak_I_bounded():
    for mu in (PARETO, Exponential(1.0), Atoms(((0.0, 0.5), (3.0, 0.5)))):
        v = theory.frak_I(0.2, mu, Q3)
        assert 0 <= v <= Q3


def test_finite_mean_small_beta_limit():
    mu = Atoms(((1.0, 0.5), (3.0, 0.5)))
    beta = 1e-4
    assert theory.frak_I(beta, mu, Q3) / (beta * mu.mean) == pytest.approx(1.0, abs=0.05)


def test_mobility_edge_point_mass():
    beta, v0 = 0.1, 4.0
    expect = 1 / (1 / Q3 + 1 / (beta * v0))
    assert theory.mobility_edge_integral(beta, PointMass(v0), Q3) == pytest.approx(expect, rel=1e-14)


def test_mobility_edge_change_of_variables_pareto():
    a = theory.mobility_edge_integral(0.1, PARETO, Q3)
    b = theory.mobility_edge_via_f(0.1, PARETO, Q3)
    assert abs(a / b - 1) <= 1e-8
    c = oracle.pareto_rate_integral_mp(0.1, 0.5, 1.0, Q3, "fbar")
    assert abs(b / c - 1) <= 1e-8


def test_mobility_edge_large_beta():
    mu = Atoms(((1.0, 0.3), (2.0, 0.7)))
    assert theory.mobility_edge_integral(1e6, mu, Q3) == pytest.approx(Q3, rel=1e-5)


# splittings ---------------------------------------------------------------


def test_riemann_split_point_mass():
    beta, a, eps = 0.01, 1e-3, 0.1
    s = theory.riemann_split(beta, PointMass(2 * a / beta), eps, a, Q3)
    assert s.kappa == 1
    # Riemann sum uses the left grid point of the cell holding 2a
    fa = theory.f_eval(2 * a, Q3)
    assert (1 - eps) * fa <= s.I_beta <= fa
    assert all(s.postconditions().values())


def test_riemann_split_two_atoms():
    beta, a, eps, p = 0.01, 1e-3, 0.1, 1e-4
    mu = Atoms(((0.0, 1 - p), (1.5 * a / beta, 0.6 * p), (3 * a / beta, 0.4 * p)))
    s = theory.riemann_split(beta, mu, eps, a, Q3)
    assert s.kappa == 2
    assert s.p_important == pytest.approx(p, rel=1e-12)
    exact = 0.6 * p * theory.f_eval(1.5 * a, Q3) + 0.4 * p * theory.f_eval(3 * a, Q3)
    assert (1 - eps) * exact <= s.I_beta <= exact


def test_riemann_split_degenerate():
    s = theory.riemann_split(0.01, PointMass(1.0), 0.1, 0.5, Q3)
    assert s.degenerate and s.I_beta == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.3, 0.9), st.floats(-4, -1), st.floats(-6, -2))
def test_riemann_split_lower_bound(alpha, log_beta, log_a):
    beta, a, eps = 10**log_beta, 10**log_a, 0.1
    s = theory.riemann_split(beta, Pareto(alpha, 1.0), eps, a, Q3)
    assert s.I_beta >= 0.81 * s.important_integral * (1 - 1e-12)
    assert all(s.postconditions().values())


def test_rho_split_no_intermediate_mass():
    beta, eps, a = 1e-3, 0.1, 1e-2
    mu = Atoms(((0.0, 0.5), (100.0, 0.5)))
    s = theory.rho_grid_split(beta, mu, eps, a, 1.0, Q3)
    assert s.I_prime == 0.0


def test_rho_split_single_cell_atom():
    beta, eps, a, M = 1e-6, 0.1, 1e-2, 10.0
    z = math.sqrt(M * a / beta)
    mu = Atoms(((0.0, 0.9), (z, 0.1)))
    s = theory.rho_grid_split(beta, mu, eps, a, M, Q3)
    hits = [(l, p) for l, lo, hi, p in s.rho_cells if p > 0]
    assert len(hits) == 1
    l, p = hits[0]
    rho = 1 - eps
    assert rho**l <= beta * z < rho ** (l - 1)
    if l in s.retained_l:
        assert s.I_prime == pytest.approx(rho**l * p, rel=1e-14)
    assert all(s.postconditions().values())


def test_rho_split_case2_lower_bound():
    from annealed_lyapunov.acceptance import case2_instance

    rng = np.random.default_rng(1)
    checked = 0
    for _ in range(40):
        mu, a = case2_instance(rng, 0.1, Q3)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            M = theory.m_beta(1e-30, mu, 0.1, Q3).M_beta
        if theory.classify_case(1e-30, mu, 0.1, a, Q3, M).case is not theory.Case.BOTH:
            continue
        s = theory.rho_grid_split(1e-30, mu, 0.1, a, M, Q3)
        assert s.I_tilde >= 0.5 * s.frak_I
        checked += 1
    assert checked >= 5


# M_beta and cases -----------------------------------------------------------


def test_z0_root_matches_scan():
    z0 = theory.z0_root(0.659)
    grid = np.linspace(1e-6, 2, 2_000_001)
    g = theory.f_eval(grid, 0.659) - grid / 2
    i = np.nonzero(g <= 0)[0][0]
    lo, hi = grid[i - 1], grid[i]
    assert lo <= z0 <= hi
    from scipy.optimize import brentq

    assert abs(brentq(lambda z: theory.f_eval(z, 0.659) - z / 2, lo, hi, xtol=1e-14) - z0) <= 1e-10


def test_m_beta_pareto_truncated_mean():
    beta, eps = 0.05, 0.1
    z0, M = theory.m_beta(beta, PARETO, eps, Q3)
    top = z0 / beta
    assert M == pytest.approx(eps * (math.sqrt(top) - 1), rel=1e-10)
    quad = PARETO.expect(lambda z: z, 1.0, top)
    assert M == pytest.approx(eps * quad, rel=1e-8)


def test_m_beta_increases_as_beta_halves():
    Ms = [theory.m_beta(b, PARETO, 0.1, Q3).M_beta for b in (0.1, 0.05, 0.025, 0.0125)]
    assert all(x < y for x, y in zip(Ms, Ms[1:]))


def test_m_beta_warns_on_finite_mean():
    with pytest.warns(RuntimeWarning):
        theory.m_beta(0.05, Exponential(1.0), 0.1, Q3)


def test_cases():
    beta, eps = 1e-9, 0.1
    a = eps**8
    M = 1.0  # intermediate range [1, 10)
    only_imp = Atoms(((0.0, 0.5), (10.0 * a / beta, 0.5)))
    assert theory.classify_case(beta, only_imp, eps, a, Q3, M).case is theory.Case.ONLY_IMPORTANT
    only_mid = Atoms(((0.0, 0.5), (3.0, 0.5)))
    assert theory.classify_case(beta, only_mid, eps, a, Q3, M).case is theory.Case.ONLY_INTERMEDIATE
    z1, z2 = 10 * a / beta, 3.0
    f1, f2 = theory.f_eval(beta * z1, Q3), theory.f_eval(beta * z2, Q3)
    m1 = 1e-8
    m2 = m1 * f1 / f2
    both = Atoms(((0.0, 1 - m1 - m2), (z1, m1), (z2, m2)))
    res = theory.classify_case(beta, both, eps, a, Q3, M)
    assert res.case is theory.Case.BOTH
    assert res.intermediate / res.important == pytest.approx(1.0, rel=1e-12)
    zero = PointMass(0.0)
    assert theory.classify_case(beta, zero, eps, a, Q3, M).case is theory.Case.DEGENERATE


# psi and Chernoff -----------------------------------------------------------


def test_psi_examples():
    assert theory.psi_p(0.3, 0.0) == 0.0
    assert theory.psi_p(0.3, 0.7) == pytest.approx(math.log(1 / 0.3), rel=1e-14)
    expect = 0.75 * math.log(1.5) + 0.25 * math.log(0.5)
    assert theory.psi_p(0.5, 0.25) == pytest.approx(expect, rel=1e-14)
    assert expect == pytest.approx(0.130812, abs=1e-6)
    assert oracle.psi_p_variational(0.5, 0.25) == pytest.approx(expect, abs=1e-9)
    assert theory.psi_p(0.3, 0.8) == math.inf
    assert theory.psi_p(0.3, -0.4) == math.inf


@given(st.floats(0.01, 0.99), st.floats(0, 1))
def test_psi_quadratic_lower_bound(p, frac):
    eta = frac * p
    # psi_p is computed to about 1e-16 absolute
    assert theory.psi_p(p, -eta) >= eta**2 / (2 * p) - 4e-16


def test_chernoff_examples():
    assert theory.chernoff_upper(10, 0.4, 0.0) == 1.0
    b = theory.chernoff_upper(20, 0.3, 0.2, "upper")
    assert b == pytest.approx(math.exp(-20 * theory.psi_p(0.3, 0.2)), rel=1e-14)
    assert oracle.exact_binomial_tail(20, 0.3, 10, "upper") <= b
    assert oracle.exact_binomial_tail(30, 0.5, 6, "lower") <= theory.chernoff_upper(30, 0.5, 0.3, "lower")


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.floats(0.05, 0.95), st.floats(0, 1))
def test_chernoff_dominates_exact(n, p, frac):
    eta = frac * (1 - p)
    k = math.ceil(n * (p + eta) - 1e-12)
    assert oracle.exact_binomial_tail(n, p, k, "upper") <= theory.chernoff_upper(n, p, eta, "upper") * (1 + 1e-9)


# counting -------------------------------------------------------------------


def test_surgery_examples():
    assert theory.surgery_count_bound(1.0, 0.0, 5) == 0.0
    assert oracle.enumerate_surgeries(2, 1) == 6 == theory.surgery_binomial(2, 2)
    assert math.log(6) <= theory.surgery_count_bound(2, 1, 1)
    c = oracle.enumerate_surgeries(12, 4)
    assert c <= math.comb(20, 8) <= math.exp(theory.surgery_count_bound(12, 4, 1))


# speed, scales ----------------------------------------------------------------


def test_optimal_speed():
    c = theory.optimal_speed(1.5, 3)
    assert c.v_star == pytest.approx(1.0) and c.cost_star == pytest.approx(3.0)
    F = theory.frak_I(0.05, PARETO, Q3)
    c = theory.optimal_speed(F, 3)
    v = np.linspace(c.v_star * 0.999, c.v_star * 1.001, 200_001)
    assert abs(c.cost(v).min() - c.cost_star) <= 1e-9
    assert theory.optimal_speed(2 * F, 3).cost_star == pytest.approx(math.sqrt(2) * c.cost_star, rel=1e-14)
    z = theory.optimal_speed(0.0, 3)
    assert z.degenerate and z.v_star == 0.0 and z.cost_star == 0.0


@given(st.floats(1e-6, 10), st.floats(1e-3, 1e3))
def test_cost_minimum(I, v):
    c = theory.optimal_speed(I, 3)
    assert c.cost(v) >= c.cost_star * (1 - 1e-12)


def test_delta_admissible():
    assert 3 * (2 / 3 + 0.05) - (2 / 3 - 0.05) == pytest.approx(1.5333333, rel=1e-6)
    assert theory.delta_admissible(3, 0.05)
    assert not theory.delta_admissible(3, 0.4)


def test_scales_algebra():
    a = theory.f_inverse(0.5, Q3)
    s = theory.SplitResult(0.1, 0.1, a, Q3, [a, math.inf], [1e-4], [(a, math.inf)], [1e-4], 0.0, 0.0, 0.0)
    sc = theory.scales(0.1, s, 0.1, 0.05, 3)
    assert sc.L_hat == pytest.approx(100.0)
    assert sc.L == pytest.approx(100 / math.sqrt(0.5))
    assert sc.ordered
    with pytest.raises(ValueError):
        theory.scales(0.1, s, 0.1, 0.4, 3)


def test_mixture_mass_matches_components():
    mix = Mixture(((0.5, PointMass(1.0)), (0.5, PARETO)))
    assert theory.frak_I(0.1, mix, Q3) == pytest.approx(
        0.5 * theory.f_eval(0.1, Q3) + 0.5 * theory.frak_I(0.1, PARETO, Q3), rel=1e-10)
