from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import dense_coercivity, dense_eigenvalues

from kglab.domain import EVEN, ODD, Grid, ModelParams, even_bump, soliton_derivative, soliton_profile
from kglab.spectral import (_h1_operator, apply_factor, build_operator, coercivity_constant, composite_su,
                            count_eigenvalues, even_spectrum, factor_s, factor_u, intertwining_residual,
                            richardson_eigenvalues, spectrum, sturm_count, su_composed)

# Dense-eigensolver outputs on ModelParams(2.0, 20.0, 801), frozen.
L_EVEN = [-8.00099657, 1.02433354, 1.09751543]
L_ODD = [-0.00112747, 1.02857228]
LMINUS_EVEN = [-7.16337834e-05, 1.02757856]
LZERO_EVEN = [1.02142004, 1.0859817]
MU_CLOSED_FORM_L = 0.526995404792911
MU_DISCRETE_L = 0.5270900949348919


def test_potential_values_at_origin(small_params, small_grid):
    a = small_params.alpha
    assert build_operator("L", small_params, small_grid).potential[0] == pytest.approx(1 - (2 * a + 1) * (a + 1))
    assert build_operator("Lzero", small_params, small_grid).potential[0] == pytest.approx(2.0)
    p1 = ModelParams(1.0, 20.0, 801)
    np.testing.assert_allclose(build_operator("Lzero", p1, Grid.from_params(p1)).potential, 1.0)
    with pytest.raises(ValueError):
        build_operator("L+", small_params, small_grid)


def test_l_potential_closed_form(small_params, small_grid):
    a = small_params.alpha
    x = small_grid.nodes
    expected = 1 - (2 * a + 1) * (a + 1) / np.cosh(a * x) ** 2
    np.testing.assert_allclose(build_operator("L", small_params, small_grid).potential, expected, atol=1e-14)
    # L0 potential stays >= 1 for alpha > 1
    assert np.all(build_operator("Lzero", small_params, small_grid).potential >= 1.0)


@pytest.mark.parametrize("kind,parity,frozen", [
    ("L", EVEN, L_EVEN), ("L", ODD, L_ODD), ("Lminus", EVEN, LMINUS_EVEN), ("Lzero", EVEN, LZERO_EVEN)])
def test_sturm_bisection_matches_dense_oracle(small_params, small_grid, kind, parity, frozen):
    op = build_operator(kind, small_params, small_grid)
    got = [p.eigenvalue for p in spectrum(op, len(frozen), parity)]
    np.testing.assert_allclose(got, frozen, atol=1e-8)
    np.testing.assert_allclose(got, dense_eigenvalues(op, len(frozen), parity), atol=1e-10)


def test_eigenpairs_normalised_with_small_residual(small_sd):
    for pair in even_spectrum(small_sd.L, 2):
        assert small_sd.grid.norm(pair.eigenfunction) == pytest.approx(1.0)
        assert pair.residual < 1e-7
        assert pair.eigenfunction[0] > 0


def test_ground_state_eigenvalue_at_production_spacing():
    # the raw h = 0.01 value carries an O(h^2) bias of 1.6e-4; the extrapolated one meets 1e-4
    rich = richardson_eigenvalues("L", ModelParams(2.0, 40.0, 4001), 1)
    assert abs(rich["coarse"][0] + 8.0) < 2e-4
    assert abs(rich["extrapolated"][0] + 8.0) <= 1e-4


def test_second_even_eigenvalue_small_alpha():
    rich = richardson_eigenvalues("L", ModelParams(0.5, 40.0, 4001), 3)
    assert abs(rich["extrapolated"][1] - 0.75) <= 1e-4


@pytest.mark.parametrize("alpha", [1.5, 2.0, 3.0])
def test_no_even_internal_mode_above_one(alpha):
    # only the ground state lies below the continuum edge
    p = ModelParams(alpha, 40.0, 4001)
    op = build_operator("L", p, Grid.from_params(p))
    assert count_eigenvalues(op, -100.0, 0.99) == 1


def test_richardson_order(small_params):
    r = richardson_eigenvalues("L", small_params, 1)
    exact = -8.0
    assert abs(r["extrapolated"][0] - exact) < abs(r["fine"][0] - exact) / 10


def test_coercivity_constant_matches_dense_oracle(small_params, small_grid, small_sd):
    closed = build_operator("L", small_params, small_grid)
    (g,) = even_spectrum(closed, 1)
    mu = coercivity_constant(closed, g.eigenfunction)
    assert mu == pytest.approx(MU_CLOSED_FORM_L, rel=1e-10)
    mu_d = coercivity_constant(small_sd.L, small_sd.Y0)
    assert mu_d == pytest.approx(MU_DISCRETE_L, rel=1e-10)
    assert mu_d == pytest.approx(dense_coercivity(small_sd.L, _h1_operator(small_grid), small_sd.Y0), rel=1e-10)
    assert mu_d > 0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1))
def test_constrained_rayleigh_bounded_below_by_coercivity(small_sd, seed):
    rng = np.random.default_rng(seed)
    g = small_sd.grid
    u = sum(rng.normal() * even_bump(g.nodes, rng.uniform(0, 6), rng.uniform(0.5, 2.5)) for _ in range(3))
    u[-1] = 0.0
    u = u - g.inner(u, small_sd.Y0) * small_sd.Y0
    quad = g.inner(small_sd.L.apply(u), u)
    h1 = g.inner(_h1_operator(g).apply(u), u)
    assert quad >= MU_DISCRETE_L * h1 * (1 - 1e-9)


@settings(max_examples=30, deadline=None)
@given(x=st.floats(-20.0, 20.0))
def test_sturm_count_monotone(small_sd, x):
    d, e = small_sd.L.tridiagonal(EVEN)
    assert sturm_count(d, e, x) <= sturm_count(d, e, x + 0.5)


def test_factor_annihilation_second_order():
    errs = []
    for n in (801, 1601):
        p = ModelParams(2.0, 20.0, n)
        g = Grid.from_params(p)
        x = g.nodes
        inner = x < 19.0
        a = p.alpha
        y0 = np.cosh(a * x) ** (-(1 + 1 / a))
        q = soliton_profile(p, g)
        dq = soliton_derivative(p, g)
        u_y0 = apply_factor(factor_u(p, g), y0, g, EVEN)
        s_q = apply_factor(factor_s(p, g), q, g, EVEN)
        u_dq = apply_factor(factor_u(p, g), dq, g, ODD) + a * q
        errs.append([np.max(np.abs(v[inner])) for v in (u_y0, s_q, u_dq)])
    for coarse, fine in zip(*errs):
        assert 3.5 < coarse / fine < 4.5


def test_factor_adjoint_flip(small_params, small_grid):
    u = factor_u(small_params, small_grid)
    assert u.adjoint.direction == "adjoint"
    assert u.adjoint.adjoint.direction == "forward"
    with pytest.raises(ValueError):
        factor_u(small_params, small_grid, direction="sideways")


@pytest.mark.parametrize("which", ["U", "SU"])
def test_intertwining_second_order(which):
    r = []
    for n in (801, 1601):
        p = ModelParams(2.0, 20.0, n)
        g = Grid.from_params(p)
        r.append(intertwining_residual(p, g, even_bump(g.nodes, 3.0, 1.0), which))
    assert 3.5 < r[0] / r[1] < 4.5


def test_intertwining_rejects_unknown(small_params, small_grid):
    with pytest.raises(ValueError):
        intertwining_residual(small_params, small_grid, even_bump(small_grid.nodes, 3.0, 1.0), "S")


def test_composite_su_paths_agree():
    diffs = []
    for n in (801, 1601):
        p = ModelParams(2.0, 20.0, n)
        g = Grid.from_params(p)
        f = even_bump(g.nodes, 2.0, 1.0)
        inner = g.nodes < 19.0
        diffs.append(np.max(np.abs((composite_su(f, p, g) - su_composed(f, p, g))[inner])))
    assert diffs[1] < diffs[0] / 3


def test_composite_su_annihilates_ground_state(small_params, small_grid):
    a = small_params.alpha
    x = small_grid.nodes
    y0 = np.cosh(a * x) ** (-(1 + 1 / a))
    assert np.max(np.abs(composite_su(y0, small_params, small_grid)[x < 19])) < 1e-2


def test_mode_vector_pairings(small_sd):
    g = small_sd.grid
    m = small_sd.modes

    def pair(a, b):
        return g.inner(a.phi1, b.phi1) + g.inner(a.phi2, b.phi2)

    assert pair(m.y_plus, m.z_plus) == pytest.approx(2.0)
    assert pair(m.y_minus, m.z_plus) == pytest.approx(0.0, abs=1e-14)
    assert pair(m.y_plus, m.z_minus) == pytest.approx(0.0, abs=1e-14)
    assert small_sd.nu0 ** 2 == pytest.approx(-small_sd.lambda0)
