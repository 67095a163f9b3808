from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from annealed_lyapunov import oracle
from annealed_lyapunov.environment import Atoms

ATOMS = Atoms(((0.0, 0.5), (1.0, 0.5)))


def test_bracket_at_beta_zero():
    br = oracle.exact_e_small(0.0, 2, ATOMS, max_len=9)
    # about 10^7 path terms are summed
    assert br.upper == pytest.approx(1.0, abs=1e-8)
    assert br.lower == pytest.approx(br.p_finished, abs=1e-10)
    longer = oracle.exact_e_small(0.0, 2, ATOMS, max_len=10)
    assert longer.lower >= br.lower


def test_bracket_orders_and_tightens():
    a = oracle.exact_e_small(0.5, 2, ATOMS, max_len=8)
    b = oracle.exact_e_small(0.5, 2, ATOMS, max_len=10)
    assert a.lower <= b.lower <= b.upper <= a.upper


def test_bracket_one_step():
    # n = 1: T = 1 with probability 1/6 and weight E[e^{-beta V}]
    br = oracle.exact_e_small(0.7, 1, ATOMS, max_len=1)
    assert br.lower == pytest.approx(ATOMS.laplace(0.7) / 6, rel=1e-14)


def test_budget():
    with pytest.raises(oracle.BudgetExceeded):
        oracle.exact_e_small(0.5, 2, ATOMS, max_len=20)
    with pytest.raises(oracle.BudgetExceeded):
        oracle.dense_green(np.zeros((20, 20, 20)), 0.1)


def test_binomial_tail_edges():
    assert oracle.exact_binomial_tail(20, 0.3, 20, "lower") == 1.0
    assert oracle.exact_binomial_tail(20, 0.3, 0, "upper") == 1.0
    direct = sum(math.comb(20, i) * 0.3**i * 0.7 ** (20 - i) for i in range(10, 21))
    assert oracle.exact_binomial_tail(20, 0.3, 10, "upper") == pytest.approx(direct, rel=1e-12)


def test_surgery_enumeration():
    assert oracle.enumerate_surgeries(7, 0) == 1
    listed = list(itertools.combinations_with_replacement(range(3), 2))
    assert len(listed) == 6 == oracle.enumerate_surgeries(2, 1)
    assert oracle.enumerate_surgeries(20, 8) == math.comb(36, 16)


def test_watson_value():
    assert oracle.watson_G0_d3() == pytest.approx(1.516386059151978, rel=1e-14)


def test_variational_psi():
    p, eta = 0.3, 0.2
    closed = (p + eta) * math.log((p + eta) / p) + (1 - p - eta) * math.log((1 - p - eta) / (1 - p))
    assert oracle.psi_p_variational(p, eta) == pytest.approx(closed, abs=1e-10)
    assert oracle.psi_p_variational(p, 0.9) == math.inf


def test_binomial_tail_symmetry():
    for n, p, k in ((20, 0.3, 7), (13, 0.55, 9), (30, 0.1, 2)):
        assert oracle.exact_binomial_tail(n, p, k, "upper") == pytest.approx(
            oracle.exact_binomial_tail(n, 1 - p, n - k, "lower"), rel=1e-14)
