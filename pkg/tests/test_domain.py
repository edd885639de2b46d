from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kglab.decomposition import decompose
from kglab.domain import (EVEN, ODD, FieldPair, Grid, ModelParams, antiderivative, discrete_soliton,
                          energy, even_bump, ground_state_closed_form, nonlinearity, nonlinearity_prime,
                          nonlinearity_second, pair_norm, quadratic_energy_expansion, soliton_closed_form,
                          soliton_profile, soliton_residual)


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(alpha=0.0)
    with pytest.raises(ValueError):
        ModelParams(n_points=5)
    p = ModelParams(2.0, 40.0, 4001)
    assert p.spacing == pytest.approx(0.01)
    assert p.nu0 == pytest.approx(np.sqrt(8.0))
    assert p.lambda0 == -8.0
    assert p.theorem_regime and not ModelParams(alpha=1.0).theorem_regime


def test_soliton_peak_value():
    for a in (0.5, 1.0, 2.0, 3.0):
        assert soliton_closed_form(np.zeros(1), a)[0] == pytest.approx((a + 1) ** (1 / (2 * a)))


def test_grid_weights_integrate_even_functions():
    g = Grid.from_params(ModelParams(2.0, 20.0, 2001))
    # full-line integral of sech^2 is 2
    assert g.integrate(1.0 / np.cosh(g.nodes) ** 2) == pytest.approx(2.0, abs=1e-6)


@pytest.mark.parametrize("alpha", [1.5, 2.0, 3.0])
def test_soliton_residual_second_order(alpha):
    res = []
    for n in (801, 1601):
        p = ModelParams(alpha, 20.0, n)
        g = Grid.from_params(p)
        res.append(np.max(np.abs(soliton_residual(soliton_profile(p, g), p, g))))
    assert 3.5 < res[0] / res[1] < 4.5


def test_discrete_soliton_is_exact_equilibrium(small_params, small_grid):
    q = discrete_soliton(small_params)
    assert np.max(np.abs(soliton_residual(q, small_params, small_grid))) < 1e-10
    closed = soliton_profile(small_params, small_grid)
    assert np.max(np.abs(q - closed)) < 1e-2


def test_derivatives_order_and_parity():
    errs = []
    for n in (801, 1601):
        g = Grid.from_params(ModelParams(2.0, 20.0, n))
        x = g.nodes
        f = np.exp(-x ** 2)
        errs.append((np.max(np.abs(g.d1(f) + 2 * x * f)),
                     np.max(np.abs(g.d2(f) - (4 * x ** 2 - 2) * f))))
    assert 3.5 < errs[0][0] / errs[1][0] < 4.5
    assert 3.5 < errs[0][1] / errs[1][1] < 4.5
    g = Grid.from_params(ModelParams(2.0, 20.0, 801))
    odd = np.tanh(g.nodes)
    assert g.d1(odd, ODD)[0] == pytest.approx(1.0, rel=1e-3)
    assert g.d2(odd, ODD)[0] == 0.0


def test_nonlinearity_derivatives_consistent():
    phi = np.linspace(-1.5, 1.5, 41)
    for a in (1.25, 2.0):
        eps = 1e-6
        dF = (antiderivative(phi + eps, a) - antiderivative(phi - eps, a)) / (2 * eps)
        np.testing.assert_allclose(dF, nonlinearity(phi, a), atol=1e-8)
        df = (nonlinearity(phi + eps, a) - nonlinearity(phi - eps, a)) / (2 * eps)
        np.testing.assert_allclose(df, nonlinearity_prime(phi, a), atol=1e-7)
        ddf = (nonlinearity_prime(phi + eps, a) - nonlinearity_prime(phi - eps, a)) / (2 * eps)
        np.testing.assert_allclose(ddf, nonlinearity_second(phi, a), atol=1e-6)


def test_energy_schemes_agree_to_second_order(small_params, small_grid):
    q = soliton_profile(small_params, small_grid)
    s = FieldPair(q, 0.1 * even_bump(small_grid.nodes, 1.0, 1.0))
    ec = energy(s, small_params, small_grid, "centered").total
    ef = energy(s, small_params, small_grid, "forward").total
    assert abs(ec - ef) < 1e-3
    with pytest.raises(ValueError):
        energy(s, small_params, small_grid, "spectral")


def test_soliton_energy_closed_form():
    # the first integral Q'^2 = Q^2 - 2 F(Q) gives E(Q) = int Q'^2
    p = ModelParams(2.0, 20.0, 4001)
    g = Grid.from_params(p)
    q = soliton_profile(p, g)
    dq = -np.tanh(2.0 * g.nodes) * q
    expected = g.inner(dq, dq)
    assert energy(FieldPair(q, np.zeros(g.n)), p, g).total == pytest.approx(expected, rel=1e-4)


def test_field_pair_algebra():
    a = FieldPair(np.ones(5), np.zeros(5))
    b = FieldPair(np.arange(5.0), np.ones(5))
    c = (a + b) - b
    np.testing.assert_array_equal(c.phi1, a.phi1)
    np.testing.assert_array_equal(b.scaled(2.0).phi2, 2 * np.ones(5))
    z = FieldPair.zeros(4)
    assert z.phi1.shape == (4,)


def test_quadratic_energy_expansion_matches_energy(small_sd):
    sd = small_sd
    p, g = sd.params, sd.grid
    e0 = energy(FieldPair(sd.Q, np.zeros(g.n)), p, g, "forward").total
    x = g.nodes
    pert = FieldPair(even_bump(x, 1.0, 1.0), 0.5 * even_bump(x, 2.0, 0.7))
    vals = []
    for s in (1e-2, 1e-3):
        st_ = FieldPair(sd.Q + s * pert.phi1, s * pert.phi2)
        diff = 2.0 * (energy(st_, p, g, "forward").total - e0)
        quad = quadratic_energy_expansion(decompose(pert.scaled(s), sd, perturbation=True), sd)
        vals.append(abs(diff - quad))
    # the remainder is cubic in the perturbation size
    assert vals[0] / vals[1] == pytest.approx(1e3, rel=0.2)


def test_ground_state_unnormalised_shape():
    x = np.linspace(0, 3, 7)
    np.testing.assert_allclose(ground_state_closed_form(x, 2.0), np.cosh(2 * x) ** -1.5)


@settings(max_examples=30, deadline=None)
@given(center=st.floats(0.0, 8.0), width=st.floats(0.3, 3.0))
def test_even_bump_is_even(center, width):
    x = np.linspace(-10, 10, 201)
    f = even_bump(x, center, width)
    np.testing.assert_allclose(f, f[::-1], rtol=1e-12, atol=1e-300)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-2, 2), b=st.floats(-2, 2))
def test_inner_product_bilinear(a, b):
    g = Grid.from_params(ModelParams(2.0, 10.0, 201))
    f1 = even_bump(g.nodes, 1.0, 1.0)
    f2 = even_bump(g.nodes, 2.0, 0.5)
    h = np.exp(-g.nodes)
    assert g.inner(a * f1 + b * f2, h) == pytest.approx(a * g.inner(f1, h) + b * g.inner(f2, h), abs=1e-12)
    assert g.inner(f1, f2) == pytest.approx(g.inner(f2, f1))


@settings(max_examples=25, deadline=None)
@given(s=st.floats(-3, 3))
def test_pair_norm_homogeneous(s):
    g = Grid.from_params(ModelParams(2.0, 10.0, 201))
    p = FieldPair(even_bump(g.nodes, 1.0, 1.0), even_bump(g.nodes, 0.0, 2.0))
    assert pair_norm(p.scaled(s), g) == pytest.approx(abs(s) * pair_norm(p, g), rel=1e-12, abs=1e-15)


def test_even_parity_constants():
    assert EVEN == 1 and ODD == -1
