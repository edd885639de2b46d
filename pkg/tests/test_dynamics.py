from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import modal_propagator

from kglab.decomposition import decompose
from kglab.domain import FieldPair, energy, even_bump
from kglab.dynamics import IntegratorConfig, Stepper, boundary_energy, evolve, step
from kglab.errors import BlowupDetected


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(dt=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(record_stride=0)
    with pytest.raises(ValueError):
        IntegratorConfig(scheme="rk4")
    with pytest.raises(ValueError):
        IntegratorConfig(boundary="periodic")
    with pytest.raises(ValueError):
        IntegratorConfig(dt=0.02, spacing=0.025)
    assert IntegratorConfig(dt=1e-3, t_max=2.0).n_steps == 2000


def test_cfl_rechecked_against_grid(small_params, small_grid):
    q = np.zeros(small_grid.n)
    with pytest.raises(ValueError):
        evolve(FieldPair(q, q), IntegratorConfig(dt=0.02, t_max=1.0), small_params, small_grid)


def test_zero_data_stays_zero(small_params, small_grid):
    z = FieldPair.zeros(small_grid.n)
    traj = evolve(z, IntegratorConfig(dt=0.01, t_max=2.0, record_stride=50), small_params, small_grid)
    assert all(not np.any(s.phi1) and not np.any(s.phi2) for s in traj.states)
    assert np.all(traj.energy == 0.0)


def test_soliton_is_stationary(small_sd):
    sd = small_sd
    traj = evolve(FieldPair(sd.Q.copy(), np.zeros(sd.grid.n)), IntegratorConfig(dt=1e-3, t_max=10.0,
                  record_stride=1000), sd.params, sd.grid, reference=sd.Q)
    assert max(np.max(np.abs(s.phi1 - sd.Q)) for s in traj.states) <= 1e-6
    assert np.max(np.abs(traj.energy - traj.energy[0])) <= 1e-8 * abs(traj.energy[0])


def test_times_uniform(small_params, small_grid):
    traj = evolve(FieldPair(even_bump(small_grid.nodes, 0, 1) * 0.1, np.zeros(small_grid.n)),
                  IntegratorConfig(dt=0.01, t_max=3.0, record_stride=20), small_params, small_grid)
    np.testing.assert_allclose(np.diff(traj.times), 0.2, rtol=1e-12)
    assert len(traj) == 16


def test_energy_conserved_for_perturbed_soliton(small_sd):
    sd = small_sd
    x = sd.grid.nodes
    # short horizon: the Y+ content of the bump grows like e^{nu0 t}
    init = FieldPair(sd.Q + 1e-3 * even_bump(x, 1.0, 1.0), 1e-3 * even_bump(x, 0.0, 2.0))
    traj = evolve(init, IntegratorConfig(dt=1e-3, t_max=1.0, record_stride=100), sd.params, sd.grid,
                  reference=sd.Q, store_states=False)
    assert np.max(np.abs(traj.energy - traj.energy[0])) < 1e-7 * abs(traj.energy[0])


def test_observer_stops_run(small_sd):
    sd = small_sd
    seen = []

    def obs(t, s):
        seen.append(t)
        return t >= 0.5

    traj = evolve(FieldPair(sd.Q.copy(), np.zeros(sd.grid.n)), IntegratorConfig(dt=0.01, t_max=5.0,
                  record_stride=10), sd.params, sd.grid, reference=sd.Q, observer=obs)
    assert traj.times[-1] == pytest.approx(0.5)


def test_time_reversibility(small_sd):
    sd = small_sd
    x = sd.grid.nodes
    init = FieldPair(1e-2 * even_bump(x, 1.0, 1.0), 1e-2 * even_bump(x, 2.0, 1.0))
    st_ = Stepper(init, sd.params, sd.grid, 1e-2, reference=sd.Q, perturbation=True)
    st_.advance(50)
    st_.advance(50, backward=True)
    back = st_.perturbation()
    assert st_.time == 0.0
    assert np.max(np.abs(back.phi1 - init.phi1)) < 1e-12
    assert np.max(np.abs(back.phi2 - init.phi2)) < 1e-12


def test_single_step_forward_backward(small_sd):
    sd = small_sd
    cfg = IntegratorConfig(dt=1e-2)
    s0 = FieldPair(sd.Q + 1e-3 * sd.Y0, np.zeros(sd.grid.n))
    s1 = step(s0, cfg, sd.params, sd.grid, reference=sd.Q)
    s2 = step(s1, cfg, sd.params, sd.grid, reference=sd.Q, backward=True)
    assert np.max(np.abs(s2.phi1 - s0.phi1)) < 1e-13


def test_blowup_detected(small_params, small_grid):
    init = FieldPair(3.0 * even_bump(small_grid.nodes, 0.0, 1.0), np.zeros(small_grid.n))
    with pytest.raises(BlowupDetected) as info:
        evolve(init, IntegratorConfig(dt=0.01, t_max=20.0, record_stride=10), small_params, small_grid)
    assert 0 < info.value.time < 20.0
    assert info.value.trajectory is not None and len(info.value.trajectory) >= 1


@pytest.mark.parametrize("sign,rtol", [(1.0, 1e-5), (-1.0, 1e-2)])
def test_linear_modal_rates_match_propagator(small_sd, sign, rtol):
    # the decaying case leaks O((nu0 dt)^2) into the growing mode, hence the looser tolerance
    sd = small_sd
    mode = sd.modes.y_plus if sign > 0 else sd.modes.y_minus
    s = 1e-6
    st_ = Stepper(mode.scaled(s), sd.params, sd.grid, 1e-3, reference=sd.Q, linearized=True, perturbation=True)
    st_.advance(1000)
    m = decompose(st_.perturbation(), sd, perturbation=True)
    expected = modal_propagator(sd.nu0, 1.0) @ np.array([s, sign * s])
    assert m.a1 == pytest.approx(expected[0], rel=rtol)
    assert m.a2 == pytest.approx(expected[1], rel=rtol)
    rate = np.log(abs(m.b_plus if sign > 0 else m.b_minus) / s)
    assert rate == pytest.approx(sign * sd.nu0, rel=0.02)


def test_nonlinear_growth_rate_small_seed(small_sd):
    sd = small_sd
    st_ = Stepper(sd.modes.y_plus.scaled(1e-6), sd.params, sd.grid, 1e-3, reference=sd.Q, perturbation=True)
    st_.advance(1000)
    b1 = decompose(st_.perturbation(), sd, perturbation=True).b_plus
    st_.advance(1000)
    b2 = decompose(st_.perturbation(), sd, perturbation=True).b_plus
    assert np.log(b2 / b1) == pytest.approx(sd.nu0, rel=0.02)


def test_boundary_energy_localised(small_grid):
    x = small_grid.nodes
    inside = FieldPair(even_bump(x, 0.0, 1.0), np.zeros(small_grid.n))
    near = FieldPair(even_bump(x, 17.0, 0.5), np.zeros(small_grid.n))
    assert boundary_energy(inside, small_grid, 5.0) < 1e-20
    assert boundary_energy(near, small_grid, 5.0) > 0.1


@settings(max_examples=10, deadline=None)
@given(amp=st.floats(1e-4, 1e-2), center=st.floats(0.0, 5.0))
def test_energy_conservation_property(small_sd, amp, center):
    sd = small_sd
    x = sd.grid.nodes
    init = FieldPair(sd.Q + amp * even_bump(x, center, 1.0), np.zeros(sd.grid.n))
    e0 = energy(init, sd.params, sd.grid, "forward").total
    traj = evolve(init, IntegratorConfig(dt=5e-3, t_max=0.5, record_stride=50), sd.params, sd.grid,
                  reference=sd.Q, store_states=False)
    assert np.max(np.abs(traj.energy - e0)) < 1e-5 * abs(e0)
