from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from annealed_lyapunov import lattice_walk as lw
from annealed_lyapunov import oracle


class _Forced:
    """Generator stand-in that always picks move ``j``."""

    def __init__(self, j):
        self.j = j

    def integers(self, *_):
        return self.j


def test_first_passage_single_step():
    p = lw.first_passage((0, 0, 0), (1, 0, 0), 1, _Forced(0))
    assert p.stopping_index == 1
    assert p.local_times == {(0, 0, 0): 1}
    assert p.reason == "hyperplane"


def test_first_passage_already_across():
    p = lw.first_passage((0, 0, 0), (1, 0, 0), 0, np.random.default_rng(0))
    assert p.stopping_index == 0
    assert p.local_times == {}


def test_first_passage_cap_censors():
    p = lw.first_passage((0, 0, 0), (1, 0, 0), 50, np.random.default_rng(0), cap=10)
    assert p.censored and p.stopping_index == 10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 6), st.sampled_from([(1, 0, 0), (0, 1, 0), (1, 1, 0), (1, 1, 1)]))
def test_first_passage_invariants(seed, n, ell):
    ell = np.asarray(ell, float) / np.linalg.norm(ell)
    p = lw.first_passage((0, 0, 0), ell, n, np.random.default_rng(seed))
    p.check()
    v = lw.unit_direction(ell)
    proj = p.positions @ v
    if not p.censored:
        assert proj[-1] >= n - 1e-9
        assert np.all(proj[:-1] < n - 1e-9)


def test_first_passage_law_matches_enumeration():
    # P(T = k) for n = 2 along e1, by enumeration versus simulation
    d, n, L = 3, 2, 7
    exact = np.zeros(L + 1)
    for k in range(1, L + 1):
        for steps in itertools.product(range(2 * d), repeat=k):
            x = 0
            ok = True
            for i, j in enumerate(steps):
                x += 1 if j == 0 else -1 if j == 1 else 0
                if x >= n and i < k - 1:
                    ok = False
                    break
            if ok and x >= n:
                exact[k] += (2 * d) ** -k
    rng = np.random.default_rng(5)
    N = 60_000
    T = np.array([lw.first_passage((0, 0, 0), (1, 0, 0), n, rng, cap=L + 1).stopping_index for _ in range(N)])
    for k in (2, 3, 4, 5, 6, 7):
        emp = np.mean(T == k)
        sd = math.sqrt(exact[k] * (1 - exact[k]) / N)
        assert abs(emp - exact[k]) <= 4 * sd + 1e-12


def test_unit_direction_checks_norm():
    with pytest.raises(ValueError):
        lw.unit_direction((1.0, 1.0, 0.0))
    v = lw.unit_direction(np.array([1.0, 1.0, 0.0]) / math.sqrt(2))
    assert np.allclose(lw.integer_direction(v), [1, 1, 0])


def test_escape_prob_d3():
    q = lw.escape_prob(3)
    assert abs(q - 0.659463) <= 1e-4
    assert 1 / q == pytest.approx(oracle.watson_G0_d3(), rel=1e-12)


def test_escape_prob_d4_mc_agrees():
    q4 = lw.escape_prob(4)
    mc = lw.escape_prob_mc(4, n_walks=200_000, seed=1)
    assert abs(mc.value - q4) <= max(3e-3, 4 * mc.stderr)


def test_escape_prob_rejects_recurrent():
    with pytest.raises(ValueError):
        lw.escape_prob(2)


def test_green_constant():
    assert lw.green_constant(3) == pytest.approx(1.5 / math.pi, rel=1e-14)


def test_hitting_adjacent_lower_bound():
    h = lw.hitting_prob_exact((1, 0, 0), 20.0)
    assert 1 / 6 <= h < 1
    # probability of ever hitting a neighbour is 1 - q3 in the full lattice
    assert h == pytest.approx(1 - lw.escape_prob(3), abs=0.03)


def test_hitting_matches_estimate():
    q, c3 = lw.escape_prob(3), lw.green_constant(3)
    h = lw.hitting_prob_exact((12, 0, 0), 40.0)
    pred = c3 * q * (1 / 12 - 1 / 40)
    assert abs(h / pred - 1) <= 0.15


def test_hitting_monotone_in_distance():
    hs = [lw.hitting_prob_exact((k, 0, 0), 15.0) for k in range(1, 10)]
    assert all(a > b for a, b in zip(hs, hs[1:]))


def test_hitting_monotone_in_radius():
    hs = [lw.hitting_prob_exact((3, 0, 0), R) for R in (6.0, 9.0, 12.0)]
    assert all(a < b for a, b in zip(hs, hs[1:]))


def test_exit_ball_radius_one():
    rng = np.random.default_rng(0)
    for _ in range(50):
        site, t = lw.exit_ball((0, 0, 0), 1.0, rng)
        assert sum(c * c for c in site) > 1
    _, times = lw.exit_ball_samples(3, 1.0, 1000, 3)
    assert np.all(times >= 2)


def test_exit_ball_rejects_small_radius():
    with pytest.raises(ValueError):
        lw.exit_ball((0, 0, 0), 0.5, np.random.default_rng(0))


def test_exit_ball_isotropy():
    disp, _ = lw.exit_ball_samples(3, 50, 100_000, 1)
    m2 = np.mean(disp[:, 0].astype(float) ** 2) / 2500
    assert abs(3 * m2 - 1) <= 0.05


def test_exit_ball_kernel_agrees_with_python():
    rng = np.random.default_rng(4)
    py = np.array([lw.exit_ball((0, 0, 0), 4.0, rng)[1] for _ in range(4000)])
    _, nb = lw.exit_ball_samples(3, 4.0, 20000, 4)
    se = math.hypot(py.std() / math.sqrt(py.size), nb.std() / math.sqrt(nb.size))
    assert abs(py.mean() - nb.mean()) <= 4 * se


def test_coarse_grain_short_path():
    path = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0]])
    assert lw.coarse_grain(path, 5.0) == [0]


def test_coarse_grain_straight_line():
    R = 4.0
    N = int(3 * R)
    path = np.array([[k, 0, 0] for k in range(N + 1)])
    idx = lw.coarse_grain(path, R)
    scan, anchor = [0], 0
    for k in range(1, N + 1):
        if k - anchor > R:
            scan.append(k)
            anchor = k
    assert idx == scan
    step = math.floor(R) + 1
    assert len(idx) - 1 == N // step


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.floats(1.0, 6.0))
def test_coarse_grain_properties(seed, R):
    p = lw.first_passage((0, 0, 0), (1, 0, 0), 8, np.random.default_rng(seed))
    idx = lw.coarse_grain(p.positions, R)
    assert idx[0] == 0 and all(a < b for a, b in zip(idx, idx[1:]))
    for a, b in zip(idx, idx[1:]):
        seg = p.positions[a:b] - p.positions[a]
        assert np.all((seg**2).sum(axis=1) <= R * R)
        last = p.positions[b] - p.positions[a]
        assert last @ last > R * R


def test_coarse_grain_large_radius():
    p = lw.first_passage((0, 0, 0), (1, 0, 0), 3, np.random.default_rng(2))
    assert lw.coarse_grain(p.positions, 1e6) == [0]


def test_substep_counts_scale():
    counts = lw.substep_counts(3, 60, 12, 5000, 3)
    assert abs(counts.mean() / 25 - 1) <= 0.15
