from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from annealed_lyapunov import oracle
from annealed_lyapunov.environment import (Atoms, Box, Exponential, FieldTooLarge, LazyField, Mixture, Pareto,
                                           PointMass, TransformedLog, laplace_mu, sample_field,
                                           spec_from_config, transform_log)

PARETO = Pareto(0.5, 1.0)


def test_point_mass_field_constant():
    env = sample_field(PointMass(2.5), Box.centered(3, 3), 1)
    assert np.all(env.values == 2.5)


def test_atoms_field_mean():
    box = Box((0, 0, 0), (99, 99, 99))
    env = sample_field(Atoms(((0.0, 0.5), (1.0, 0.5))), box, 7)
    n = env.values.size
    assert abs(env.values.mean() - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_pareto_field_tail():
    box = Box((0, 0, 0), (99, 99, 99))
    env = sample_field(PARETO, box, 8)
    p = np.mean(env.values > 100)
    assert abs(p - 0.1) <= 3 * math.sqrt(0.09 / env.values.size)


def test_field_is_site_keyed():
    small = sample_field(PARETO, Box.centered(2, 3), 5)
    big = sample_field(PARETO, Box.centered(4, 3), 5)
    lazy = LazyField(PARETO, 5)
    for site, v in small.items():
        assert big[site] == v == lazy[site]


def test_field_too_large():
    with pytest.raises(FieldTooLarge):
        sample_field(PARETO, Box.centered(10, 3), 0, max_sites=1000)


def test_laplace_examples():
    assert laplace_mu(PARETO, 0.0) == 1.0
    assert laplace_mu(PointMass(3.0), 0.7) == pytest.approx(math.exp(-2.1), rel=1e-14)
    assert laplace_mu(PARETO, 1.0) == pytest.approx(oracle.pareto_laplace_mp(1.0, 0.5, 1.0), rel=1e-8)
    assert laplace_mu(Exponential(2.0), 1.0) == pytest.approx(2 / 3, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 50))
def test_pareto_laplace_dual_quadrature(t):
    assert laplace_mu(PARETO, t) == pytest.approx(oracle.pareto_laplace_mp(t, 0.5, 1.0), rel=1e-7)


def test_transform_log_examples():
    z = transform_log(PointMass(0.0), 0.3)
    assert isinstance(z, PointMass) and z.v0 == 0.0
    t = transform_log(PointMass(5.0), 0.2)
    assert t.v0 == pytest.approx(math.log1p(1.0) / 0.2, rel=1e-14)
    tp = transform_log(PARETO, 0.1)
    assert isinstance(tp, TransformedLog)
    assert tp.tail(math.log1p(0.1 * 100) / 0.1) == pytest.approx(PARETO.tail(100), rel=1e-12)


def test_truncated_mean_closed_form():
    assert PARETO.truncated_mean(400.0) == pytest.approx(19.0, rel=1e-12)
    assert PARETO.truncated_mean(400.0) == pytest.approx(PARETO.expect(lambda z: z, 0, 400.0), rel=1e-8)


def test_pareto_has_infinite_mean():
    assert PARETO.mean == math.inf
    assert Exponential(2.0).mean == 0.5


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-6, 1 - 1e-6))
def test_quantile_inverts_tail(u):
    for mu in (PARETO, Exponential(1.0)):
        z = float(mu.quantile(np.array([u]))[0])
        assert 1 - mu.tail(z) == pytest.approx(u, abs=1e-9)


def test_config_roundtrip():
    mix = Mixture(((0.3, PointMass(1.0)), (0.7, PARETO)))
    for mu in (PARETO, Exponential(1.5), Atoms(((0.0, 0.25), (2.0, 0.75))), PointMass(4.0), mix,
               TransformedLog(PARETO, 0.1)):
        back = spec_from_config(mu.to_config())
        assert back.log_laplace(0.3) == pytest.approx(mu.log_laplace(0.3), rel=1e-10)


def test_spec_validation():
    with pytest.raises(ValueError):
        Atoms(((0.0, 0.5), (1.0, 0.4)))
    with pytest.raises(ValueError):
        Pareto(-1.0, 1.0)
    with pytest.raises(ValueError):
        spec_from_config({"family": "nope"})
