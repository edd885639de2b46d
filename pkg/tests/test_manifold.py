from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kglab.domain import FieldPair, ModelParams, even_bump, pair_norm
from kglab.errors import BracketFailure
from kglab.manifold import (AdmissiblePerturbation, LabContext, ShootingConfig, ShootingResult, _Prober,
                            admissible_from_raw, find_h, lipschitz_probe, off_manifold_control,
                            perturbation_family, random_admissible, random_raw, shoot, stability_verdict,
                            zero_perturbation)


@pytest.fixture(scope="module")
def ctx():
    return LabContext.create(ModelParams(2.0, 20.0, 801), dt=1e-2, record_stride=10)


@pytest.fixture(scope="module")
def short():
    return ShootingConfig(delta0=2e-3, t_max=6.0, probe_horizon=6.0, check_every=5)


def test_context_validation():
    with pytest.raises(ValueError):
        LabContext.create(ModelParams(2.0, 20.0, 801), dt=0.02)
    c = LabContext.for_horizon(2.0, 100.0, spacing=0.05)
    assert c.grid.x_max == 65.0 and c.grid.h == pytest.approx(0.05)
    assert LabContext.for_horizon(2.0, 20.0, spacing=0.05).grid.x_max == 40.0


def test_shooting_config_defaults():
    cfg = ShootingConfig()
    assert cfg.bracket_value == pytest.approx(4 ** 5 * 4e-6)
    assert cfg.tol == pytest.approx(cfg.bracket_value * 2.0 ** -38)
    assert cfg.tube_bound == pytest.approx(16 * 2e-3)
    with pytest.raises(ValueError):
        ShootingConfig(delta0=0.0)
    with pytest.raises(ValueError):
        ShootingConfig(bracket=1e-3, bisection_tol=1e-2)
    with pytest.raises(ValueError):
        ShootingConfig(max_iters=0)


def test_stable_mode_already_admissible(ctx):
    sd = ctx.sd
    y = sd.modes.y_minus.scaled(1e-3)
    eps = admissible_from_raw(y.phi1, y.phi2, sd)
    np.testing.assert_allclose(eps.eps1, y.phi1, atol=1e-18)
    np.testing.assert_allclose(eps.eps2, y.phi2, atol=1e-18)


def test_unstable_mode_removed(ctx):
    sd = ctx.sd
    y = sd.modes.y_plus.scaled(1e-3)
    eps = admissible_from_raw(y.phi1, y.phi2, sd)
    assert eps.norm < 1e-15


def test_orthogonal_pair_unchanged(ctx):
    sd = ctx.sd
    f = even_bump(sd.grid.nodes, 3.0, 1.0)
    f[-1] = 0.0
    f -= sd.grid.inner(f, sd.Y0) * sd.Y0
    eps = admissible_from_raw(f, 0.5 * f, sd)
    np.testing.assert_allclose(eps.eps1, f, atol=1e-16)
    np.testing.assert_allclose(eps.eps2, 0.5 * f, atol=1e-16)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), size=st.floats(1e-5, 1e-2))
def test_random_admissible_properties(ctx, seed, size):
    eps = random_admissible(ctx.sd, size, seed)
    assert abs(eps.z_plus_component(ctx.sd)) <= 1e-12 * max(1.0, size)
    assert eps.norm == pytest.approx(size, rel=1e-12)
    assert pair_norm(eps.pair, ctx.grid) == pytest.approx(size, rel=1e-12)


def test_random_raw_reproducible(ctx):
    a = random_raw(ctx.grid, np.random.default_rng(3))
    b = random_raw(ctx.grid, np.random.default_rng(3))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_family_on_sphere(ctx):
    fam = perturbation_family(ctx.sd, 1e-3, 0, members=5)
    assert len(fam) == 5
    for e in fam:
        assert pair_norm(e.pair, ctx.grid) == pytest.approx(1e-3)
        assert abs(e.z_plus_component(ctx.sd)) < 1e-14


def test_zero_perturbation_gives_zero_graph(ctx, short):
    res = shoot(zero_perturbation(ctx.sd), short, ctx)
    assert res.b_plus_0 == 0.0
    assert res.trapped
    assert res.tube_max_distance == 0.0
    assert set(res.to_json()) == {"b_plus_0", "verdict", "exit_time", "iterations", "tube_max_distance",
                                  "decay_integral", "archive_path"}


def test_stable_mode_shot(ctx, short):
    s = 1e-3
    y = ctx.sd.modes.y_minus.scaled(s)
    eps = admissible_from_raw(y.phi1, y.phi2, ctx.sd)
    res = shoot(eps, short, ctx)
    assert res.trapped
    assert abs(res.b_plus_0) <= 100 * s ** 1.5
    assert res.tube_max_distance <= short.tube_bound
    assert res.iterations <= short.max_iters
    np.testing.assert_allclose(np.diff(res.times), ctx.record_dt, rtol=1e-9)


def test_random_shot_trapped(ctx, short):
    eps = random_admissible(ctx.sd, 1e-3, 0)
    res = shoot(eps, short, ctx)
    assert res.trapped and res.exit_time is None
    assert res.tube_max_distance <= 5 * eps.norm
    h, it, width = find_h(eps, short, ctx)
    assert h == res.b_plus_0 and it == res.iterations and width <= short.tol


def test_bracket_failure(ctx):
    eps = random_admissible(ctx.sd, 1e-3, 1)
    cfg = ShootingConfig(bracket=1e-14, bisection_tol=1e-16, t_max=6.0, probe_horizon=6.0, check_every=5)
    with pytest.raises(BracketFailure) as info:
        find_h(eps, cfg, ctx)
    assert info.value.lo[0] == info.value.hi[0]


def test_exit_sign_monotone_in_shift(ctx, short):
    eps = random_admissible(ctx.sd, 1e-3, 2)
    h, _, _ = find_h(eps, short, ctx)
    probe = _Prober(ctx, eps.pair, short.bracket_value, short.probe_horizon, short.check_every)
    shifts = h + np.array([-1e-3, -1e-5, -1e-7, 1e-7, 1e-5, 1e-3])
    signs = [probe(c)[0] for c in shifts]
    assert signs == sorted(signs)
    assert signs[0] == -1 and signs[-1] == 1


@pytest.mark.parametrize("sign", [1, -1])
def test_off_manifold_control_rate(ctx, short, sign):
    eps = random_admissible(ctx.sd, 1e-3, 0)
    rep = off_manifold_control(eps, sign, short, ctx)
    assert rep["verdict"] == ("exited_plus" if sign > 0 else "exited_minus")
    assert rep["exit_time"] is not None
    assert abs(rep["rate_ratio"] - 1.0) <= 0.05


def test_escaping_run_verdict_negative(ctx):
    res = ShootingResult(b_plus_0=1e-3, verdict="exited_plus", exit_time=2.0, iterations=0,
                         tube_max_distance=1e-2, decay_integral=None)
    v = stability_verdict(res, ctx)
    assert v["positive"] is False and v["in_scope"] is False


def test_stationary_verdict_zero_distance(ctx, short):
    res = shoot(zero_perturbation(ctx.sd), short, ctx)
    v = stability_verdict(res, ctx)
    assert v["positive"]
    assert np.all(v["windows"][0]["distance"] == 0.0)
    with pytest.raises(ValueError):
        stability_verdict(res, ctx, windows=((0.0, 5.0),))


def test_lipschitz_rejects_identical_pair(ctx, short):
    e = random_admissible(ctx.sd, 1e-3, 0)
    with pytest.raises(ValueError):
        lipschitz_probe([(e, e)], short, ctx)


def test_lipschitz_antisymmetric_pair(ctx, short):
    e = random_admissible(ctx.sd, 1e-3, 0)
    rep = lipschitz_probe([(e, e.scaled(-1.0))], short, ctx)
    assert rep["finite"]
    row = rep["pairs"][0]
    assert row["distance"] == pytest.approx(2e-3)
    assert abs(row["h_a"] - row["h_b"]) <= 100 * np.sqrt(short.delta0) * 2 * e.norm


def test_admissible_scaling():
    e = AdmissiblePerturbation(np.ones(3), np.zeros(3), 2.0)
    s = e.scaled(-0.5)
    assert s.norm == 1.0 and s.eps1[0] == -0.5
    assert isinstance(s.pair, FieldPair)
