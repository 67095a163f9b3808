from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from annealed_lyapunov import green, oracle
from annealed_lyapunov._lattice import SolverError
from annealed_lyapunov.environment import Atoms, Box, EnvironmentField, Pareto, PointMass, sample_field

ATOMS3 = Atoms(((0.0, 0.3), (1.0, 0.4), (5.0, 0.3)))


def _field(values: np.ndarray, lower=None) -> EnvironmentField:
    lower = lower or (0,) * values.ndim
    upper = tuple(l + s - 1 for l, s in zip(lower, values.shape))
    return EnvironmentField(PointMass(0.0), Box(lower, upper), values.astype(float), 0)


def test_single_site_zero_potential():
    op = green.assemble(_field(np.zeros((1, 1, 1))), 0.5)
    assert op.diag[0] == 1.0
    assert green.solve_green(op, (0, 0, 0))[(0, 0, 0)] == pytest.approx(1.0, abs=1e-12)


def test_single_site_series_reconciliation():
    v = 3.0
    env = _field(np.full((1, 1, 1), v))
    chk = green.fk_equivalence_check(env, 0.5, (0, 0, 0))
    g = green.solve_green(green.assemble(env, 0.5), (0, 0, 0))[(0, 0, 0)]
    assert g == pytest.approx(1 / (1 + 0.5 * v), rel=1e-12)
    assert chk.max_deviation <= 1e-12


def test_large_potential_blocks_passage():
    vals = np.zeros((5, 1, 1))
    vals[2, 0, 0] = 1e12
    gf = green.solve_green(green.assemble(_field(vals), 1.0), (0, 0, 0))
    assert gf[(4, 0, 0)] < 1e-12
    assert gf[(0, 0, 0)] > 0.5


def test_zero_potential_equals_killed_walk():
    env = _field(np.zeros((3, 3, 3)))
    chk = green.fk_equivalence_check(env, 0.5, (1, 1, 1))
    assert chk.ok
    gf = green.solve_green(green.assemble(env, 0.5), (1, 1, 1))
    mean, se = oracle.killed_walk_occupation_mc((3, 3, 3), (1, 1, 1), 20_000, np.random.default_rng(0))
    assert np.all(np.abs(gf.values - mean) <= 4 * se + 1e-9)


def test_atoms_3x3x3_series():
    for s in range(3):
        env = sample_field(ATOMS3, Box.centered(1, 3), s)
        chk = green.fk_equivalence_check(env, 0.5, (0, 0, 0))
        assert chk.max_deviation <= 1e-6 and chk.ok


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.01, 2.0))
def test_matches_dense_inverse(seed, beta):
    env = sample_field(Pareto(0.5, 1.0), Box((0, 0, 0), (3, 2, 2)), seed)
    gf = green.solve_green(green.assemble(env, beta), (1, 1, 1), tol=1e-12)
    G = oracle.dense_green(env.values, beta)
    i = np.ravel_multi_index((1, 1, 1), env.values.shape)
    # CG accuracy is norm-wise, so compare against the largest entry
    assert np.max(np.abs(gf.values.ravel() - G[i])) <= 1e-9 * G[i].max()


def test_symmetry():
    env = sample_field(ATOMS3, Box.centered(3, 3), 4)
    op = green.assemble(env, 0.3)
    x, y = (-2, 1, 0), (2, -1, 3)
    assert green.solve_green(op, x, tol=1e-12)[y] == pytest.approx(green.solve_green(op, y, tol=1e-12)[x],
                                                                   rel=1e-8)


def test_positive_and_monotone_in_potential():
    env = sample_field(ATOMS3, Box.centered(3, 3), 1)
    lo = green.solve_green(green.assemble(env, 0.1), (0, 0, 0)).values
    hi = green.solve_green(green.assemble(env, 0.5), (0, 0, 0)).values
    assert lo.min() > 0 and np.all(hi <= lo + 1e-12)


def test_rejects_negative_potential():
    with pytest.raises(ValueError):
        green.assemble(_field(-np.ones((2, 2, 2))), 0.1)


def test_solver_error_on_iteration_limit():
    env = sample_field(ATOMS3, Box.centered(6, 3), 0)
    with pytest.raises(SolverError):
        green.solve_green(green.assemble(env, 0.01), (0, 0, 0), maxiter=2)


def test_zero_potential_rate_vanishes():
    small = green.averaged_green_decay(PointMass(0.0), 0.1, [2, 4, 6, 8], n_env=1, box_margin=4,
                                       check_margin=False)
    big = green.averaged_green_decay(PointMass(0.0), 0.1, [2, 4, 6, 8], n_env=1, box_margin=16,
                                     check_margin=False)
    assert 0 < big.fit.alpha < small.fit.alpha


def test_decay_records_margin_shift():
    de = green.averaged_green_decay(Pareto(0.5, 1.0), 0.05, [2, 4, 6, 8], n_env=4, box_margin=4)
    assert "margin_shift" in de.extra and isinstance(de.extra["truncation_flag"], bool)
    assert de.fit.alpha > 0
