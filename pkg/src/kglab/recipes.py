"""Named experiments and the assertion suite behind ``lab check``.

Every recipe writes its artifacts through a :class:`Recorder` and appends
:class:`Check` rows. Values that depend on wall-clock time are kept apart
from the deterministic payload so that two runs with the same seed produce
identical reports apart from the ``timings`` block.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import persist
from .config import LabConfig
from .decomposition import decompose, modal_table
from .domain import (EVEN, FieldPair, Grid, ModelParams, even_bump,
                     ground_state_closed_form, soliton_closed_form, soliton_derivative)
from .dynamics import IntegratorConfig, Stepper, evolve
from .errors import RecipeError
from .manifold import (AdmissiblePerturbation, LabContext, ShootingConfig, ShootingResult,
                       admissible_from_raw, analyze_trapped, lipschitz_probe, modal_series,
                       off_manifold_control, perturbation_family, random_admissible, shoot, zero_perturbation)
from .plots import emit_plot
from .spectral import (apply_factor, factor_s, factor_u,
                       intertwining_residual, refined, richardson_eigenvalues, spectral_data)
from .transform import make_weights, weights_from_delta
from .virial import (check_virial_identity, nonlinear_claim, positivity_scan,
                     repulsive_potential, series_array)

log = logging.getLogger(__name__)


# -- bookkeeping ------------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    measured: object
    threshold: str
    hard: bool = True

    def to_json(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "measured": self.measured,
                "threshold": self.threshold, "hard": self.hard}


@dataclass
class Recorder:
    """Per-run output directory, emitted files, checks and timings."""

    out_dir: Path
    files: list[Path] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)
    timing_checks: list[Check] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def json(self, name: str, obj) -> Path:
        p = persist.write_json(self.path(name), obj)
        self.files.append(p)
        return p

    def csv(self, name: str, columns) -> Path:
        p = persist.write_csv(self.path(name), columns)
        self.files.append(p)
        return p

    def plot(self, name: str, series, **kwargs) -> Path | None:
        try:
            p = emit_plot(series, self.path(name), **kwargs)
        except ValueError as exc:
            log.warning("plot %s skipped: %s", name, exc)
            return None
        self.files.append(p)
        return p

    def check(self, name: str, passed: bool, measured, threshold: str, hard: bool = True) -> bool:
        self.checks.append(Check(name, bool(passed), persist._jsonable(measured), threshold, hard))
        return bool(passed)

    def timed_check(self, name: str, seconds: float, limit: float) -> bool:
        self.timings[name] = seconds
        self.timing_checks.append(Check(name, seconds <= limit, round(seconds, 3), f"<= {limit} s"))
        return seconds <= limit

    @property
    def hard_failures(self) -> list[str]:
        return [c.name for c in self.checks + self.timing_checks if c.hard and not c.passed]


def worker_count() -> int:
    """Worker cap from ``LAB_THREADS`` (default: CPU count)."""
    raw = os.environ.get("LAB_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise RecipeError(f"LAB_THREADS must be an integer, got {raw!r}") from None
        return max(1, n)
    return max(1, os.cpu_count() or 1)


def parallel_map(fn: Callable, items: Sequence) -> list:
    """Order-preserving map over independent units, threaded up to :func:`worker_count`."""
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _fit_rate(t: np.ndarray, v: np.ndarray) -> float:
    ok = np.abs(v) > 0
    return float(np.polyfit(t[ok], np.log(np.abs(v[ok])), 1)[0])


def _nu0_exact(alpha: float) -> float:
    return math.sqrt(alpha * (alpha + 2.0))


# -- spectrum -------------------------------------------------------------------------

def spectrum_report(params: ModelParams) -> dict:
    """Lowest even eigenvalues of ``L``, ``L_-`` and ``L_0`` at ``h``, ``h/2`` and extrapolated."""
    a = params.alpha
    out = {"alpha": a, "h": params.spacing, "lambda0_exact": -a * (a + 2.0)}
    for kind in ("L", "Lminus", "Lzero"):
        r = richardson_eigenvalues(kind, params, 3)
        out[kind] = {k: v.tolist() for k, v in r.items()}
    lam = np.array(out["L"]["extrapolated"])
    out["lambda0"] = float(lam[0])
    out["lambda0_error"] = abs(lam[0] - out["lambda0_exact"])
    if a < 1:
        target = a * (2.0 - a)
        out["second_even_exact"] = target
        out["second_even_error"] = float(np.min(np.abs(lam[1:] - target)))
    return out


def recipe_spectrum(cfg: LabConfig, rec: Recorder, alphas: Sequence[float] | None = None) -> dict:
    alphas = alphas or (cfg.model.alpha,)
    rows = []
    for a in alphas:
        params = dataclasses.replace(cfg.model, alpha=float(a))
        t0 = time.perf_counter()
        rep = spectrum_report(params)
        rec.timed_check(f"spectrum_runtime_alpha_{a:g}", time.perf_counter() - t0, 10.0)
        rows.append(rep)
        rec.check(f"lambda0_alpha_{a:g}", rep["lambda0_error"] <= 1e-4, rep["lambda0"],
                  f"|lambda0 + {a:g}({a:g}+2)| <= 1e-4")
        if a < 1:
            rec.check(f"second_even_alpha_{a:g}", rep["second_even_error"] <= 1e-4,
                      rep["second_even_error"], f"even spectrum contains {a * (2 - a):g} within 1e-4")
    rec.json("spectrum.json", rows if len(rows) > 1 else rows[0])
    params = cfg.model
    grid = Grid.from_params(params)
    sd = spectral_data(params)
    x = grid.nodes
    rec.csv("profiles.csv", {"x": x, "Q": soliton_closed_form(x, params.alpha), "Q_h": sd.Q,
                             "Y0": sd.Y0})
    keep = x <= 10
    rec.plot("profiles.svg", {"Q": (x[keep], sd.Q[keep]), "Y0": (x[keep], sd.Y0[keep])},
             title=f"soliton and ground state, alpha={params.alpha:g}", xlabel="x")
    return {"spectrum": rows}


# -- factorization --------------------------------------------------------------------

def _probes(grid: Grid) -> dict[str, np.ndarray]:
    x = grid.nodes
    return {"gauss_1": np.exp(-x ** 2), "gauss_2": np.exp(-(x / 2.0) ** 2),
            "bump_2": even_bump(x, 2.0, 1.0)}


def _annihilation(params: ModelParams, grid: Grid) -> dict[str, float]:
    a = params.alpha
    x = grid.nodes
    y0 = ground_state_closed_form(x, a)
    q = soliton_closed_form(x, a)
    dq = soliton_derivative(params, grid)
    inner = x < grid.x_max - 1.0  # avoid the one-sided end stencil
    res = {
        "U_Y0": apply_factor(factor_u(params, grid), y0, grid, EVEN),
        "S_Q": apply_factor(factor_s(params, grid), q, grid, EVEN),
        "U_dQ_plus_alpha_Q": apply_factor(factor_u(params, grid), dq, grid, -EVEN) + a * q,
    }
    norms = {"U_Y0": grid.norm(y0), "S_Q": grid.norm(q), "U_dQ_plus_alpha_Q": grid.norm(q)}
    return {k: float(np.sqrt(grid.integrate(np.where(inner, v * v, 0.0)))) / norms[k]
            for k, v in res.items()}


def factorization_report(params: ModelParams) -> dict:
    fine = refined(params)
    out = {"alpha": params.alpha, "h": params.spacing, "intertwining": [], "annihilation": {}}
    for which in ("U", "SU"):
        for name in _probes(Grid.from_params(params)):
            r = [intertwining_residual(p, g, _probes(g)[name], which)
                 for p, g in ((params, Grid.from_params(params)), (fine, Grid.from_params(fine)))]
            out["intertwining"].append({"which": which, "probe": name, "coarse": r[0], "fine": r[1],
                                        "ratio": r[0] / r[1]})
    ann = [_annihilation(p, Grid.from_params(p)) for p in (params, fine)]
    for k in ann[0]:
        out["annihilation"][k] = {"coarse": ann[0][k], "fine": ann[1][k], "ratio": ann[0][k] / ann[1][k]}
    return out


def recipe_factorization(cfg: LabConfig, rec: Recorder) -> dict:
    rep = factorization_report(cfg.model)
    for row in rep["intertwining"]:
        rec.check(f"intertwining_{row['which']}_{row['probe']}", 3.5 <= row["ratio"] <= 4.5,
                  row["ratio"], "residual ratio under h -> h/2 in [3.5, 4.5]")
    for k, row in rep["annihilation"].items():
        rec.check(f"annihilation_{k}", 3.5 <= row["ratio"] <= 4.5, row["ratio"],
                  "residual ratio under h -> h/2 in [3.5, 4.5]")
    rec.json("factorization.json", rep)
    return {"factorization": rep}


# -- dynamics ------------------------------------------------------------------------

def linear_modes_report(params: ModelParams, dt: float = 1e-3, rec: Recorder | None = None) -> dict:
    sd = spectral_data(params)
    grid = sd.grid
    q = sd.Q
    nu_exact = _nu0_exact(params.alpha)
    out: dict = {"alpha": params.alpha, "nu0_exact": nu_exact, "nu0_discrete": sd.nu0}

    # stationarity of (Q, 0) over t = 10
    traj = evolve(FieldPair(q.copy(), np.zeros(grid.n)), IntegratorConfig(dt=dt, t_max=10.0, record_stride=1000),
                  params, grid, reference=q)
    out["stationary_sup"] = max(float(np.max(np.abs(s.phi1 - q))) for s in traj.states)

    # energy drift of (Q, 0) over t = 50
    traj = evolve(FieldPair(q.copy(), np.zeros(grid.n)), IntegratorConfig(dt=dt, t_max=50.0, record_stride=1000),
                  params, grid, reference=q, store_states=False)
    e0 = traj.energy[0]
    out["energy_drift"] = float(np.max(np.abs(traj.energy - e0)) / abs(e0))

    # a moving packet in vacuum shows the O(dt^2) oscillation of the scheme
    x = grid.nodes
    packet = FieldPair(0.5 * even_bump(x, 0.0, 2.0), np.zeros(grid.n))
    traj = evolve(packet, IntegratorConfig(dt=dt, t_max=50.0, record_stride=1000), params, grid,
                  store_states=False)
    out["packet_energy_drift"] = float(np.max(np.abs(traj.energy - traj.energy[0])) / abs(traj.energy[0]))

    # linear growth and decay along Y+ and Y-
    s = 1e-6
    series = {}
    for label, mode in (("plus", sd.modes.y_plus), ("minus", sd.modes.y_minus)):
        st = Stepper(mode.scaled(s), params, grid, dt, reference=q, linearized=True, perturbation=True)
        ts, states = [0.0], [st.perturbation()]
        # b- falls by e^{-3 nu0} over t = 3; later samples hit the roundoff floor
        for _ in range(30):
            st.advance(int(round(0.1 / dt)))
            ts.append(st.time)
            states.append(st.perturbation())
        modal = [decompose(p, sd, t=t, perturbation=True) for t, p in zip(ts, states)]
        series[label] = modal
        coord = np.array([m.b_plus if label == "plus" else m.b_minus for m in modal])
        out[f"rate_{label}"] = _fit_rate(np.array(ts), coord)
    out["rate_plus_rel_error"] = abs(out["rate_plus"] / nu_exact - 1.0)
    out["rate_minus_rel_error"] = abs(-out["rate_minus"] / nu_exact - 1.0)
    if rec is not None:
        for label, modal in series.items():
            rec.csv(f"modal_linear_{label}.csv", modal_table(modal, sd))
        rec.plot("linear_modes.svg",
                 {"|b+| (Y+ data)": ([m.t for m in series["plus"]], [abs(m.b_plus) for m in series["plus"]]),
                  "|b-| (Y- data)": ([m.t for m in series["minus"]], [abs(m.b_minus) for m in series["minus"]])},
                 title="linear mode amplitudes", xlabel="t", logy=True)
    return out


def recipe_linear_modes(cfg: LabConfig, rec: Recorder) -> dict:
    rep = linear_modes_report(cfg.model, cfg.integrator.dt, rec)
    rec.check("stationary_soliton", rep["stationary_sup"] <= 1e-6, rep["stationary_sup"],
              "sup |phi1 - Q| <= 1e-6 over t = 10")
    rec.check("energy_drift", rep["energy_drift"] <= 1e-8, rep["energy_drift"],
              "relative energy drift <= 1e-8 over t = 50")
    rec.check("growth_rate", rep["rate_plus_rel_error"] <= 0.02, rep["rate_plus"], "within 2% of +nu0")
    rec.check("decay_rate", rep["rate_minus_rel_error"] <= 0.02, rep["rate_minus"], "within 2% of -nu0")
    rec.json("linear_modes.json", rep)
    return {"linear_modes": rep}


# -- virial statics ---------------------------------------------------------------------

def _random_bump(grid: Grid, rng: np.random.Generator) -> np.ndarray:
    f = np.zeros(grid.n)
    for _ in range(3):
        f += rng.normal() * even_bump(grid.nodes, rng.uniform(0.0, 6.0), rng.uniform(0.5, 2.0))
    f[-1] = 0.0
    return f


def virial_static_report(params: ModelParams, seed: int, delta: float = 1e-2, gamma: float = 0.05,
                         identity_samples: int = 10, claim_samples: int = 20) -> dict:
    """Identity convergence under ``h -> h/2`` and the explicit-constant claim."""
    fine = refined(params)
    grids = [Grid.from_params(p) for p in (params, fine)]
    wts = [weights_from_delta(delta, gamma, g) for g in grids]
    rng = np.random.default_rng(seed)
    ident = []
    for _ in range(identity_samples):
        bumps = [(rng.normal(), rng.uniform(0.0, 6.0), rng.uniform(0.5, 2.0)) for _ in range(3)]
        res = []
        for g, w in zip(grids, wts):
            f = sum(c * even_bump(g.nodes, m, s) for c, m, s in bumps)
            f[-1] = 0.0
            res.append(check_virial_identity(f, w, g))
        ident.append({"coarse": res[0], "fine": res[1], "ratio": res[0] / res[1] if res[1] > 0 else np.inf})
    sd = spectral_data(params)
    grid = sd.grid
    w = weights_from_delta(delta, gamma, grid)
    claims = []
    for _ in range(claim_samples):
        u = _random_bump(grid, rng)
        u -= grid.inner(u, sd.Y0) * sd.Y0
        u *= rng.uniform(1e-3, 1.0) / np.max(np.abs(u))
        lhs, rhs = nonlinear_claim(u, w, params.alpha, grid)
        claims.append({"lhs": lhs, "rhs": rhs, "margin": rhs - lhs})
    return {"alpha": params.alpha, "delta": delta, "identity": ident, "claim": claims,
            "claim_constant": (4.0 / 3.0) * ((params.alpha + 1) / params.alpha) ** 2,
            "claim_violations": int(sum(c["lhs"] > c["rhs"] for c in claims))}


def positivity_report(alphas: Sequence[float], base: ModelParams) -> dict:
    out = {}
    for a in alphas:
        p = dataclasses.replace(base, alpha=float(a))
        out[f"{a:g}"] = positivity_scan(p, Grid.from_params(p))
    return out


# -- shooting -----------------------------------------------------------------------

def make_perturbation(cfg: LabConfig, ctx: LabContext, seed: int) -> AdmissiblePerturbation:
    kind, size = cfg.perturbation.kind, cfg.perturbation.size
    sd = ctx.sd
    if kind == "zero" or size == 0:
        return zero_perturbation(sd)
    if kind == "y_minus":
        y = sd.modes.y_minus
        return admissible_from_raw(size * y.phi1, size * y.phi2, sd)
    return random_admissible(sd, size, seed)


def shooting_context(cfg: LabConfig, alpha: float | None = None) -> LabContext:
    a = cfg.model.alpha if alpha is None else alpha
    spacing = cfg.model.spacing
    return LabContext.for_horizon(a, cfg.shooting.t_max, spacing=spacing,
                                  min_half_length=cfg.model.domain_half_length,
                                  dt=cfg.integrator.dt, record_stride=cfg.integrator.record_stride,
                                  gamma=cfg.weights.gamma, boundary_layer=cfg.integrator.boundary_layer)


def _weights_for(cfg: LabConfig, ctx: LabContext):
    if cfg.weights.auto:
        return None
    return make_weights(cfg.weights.A, cfg.weights.B, cfg.weights.gamma, ctx.grid)


def archive_run(result: ShootingResult, ctx: LabContext, rec: Recorder, stem: str,
                diagnostics: dict | None = None) -> Path:
    """Trajectory CSV (modal coordinates, distances) with a JSON sidecar and sampled fields."""
    sd, grid = ctx.sd, ctx.grid
    series = modal_series(result, ctx)
    table = modal_table(series, sd)
    table["tube_distance"] = result.tube_distance
    table["boundary_energy"] = result.boundary
    stab = (diagnostics or {}).get("stability", {})
    if stab.get("windows"):
        table["local_distance"] = stab["windows"][0]["distance"]
    path = rec.csv(f"{stem}_trajectory.csv", table)
    stride = max(1, int(round(0.5 / grid.h)))
    idx = np.arange(0, grid.n, stride)
    idx = idx[grid.nodes[idx] <= 20.0]
    fields = {"t": result.times}
    for i in idx:
        fields[f"u1@{grid.nodes[i]:g}"] = np.array([s.phi1[i] for s in result.states])
    for i in idx:
        fields[f"u2@{grid.nodes[i]:g}"] = np.array([s.phi2[i] for s in result.states])
    rec.csv(f"{stem}_fields.csv", fields)
    rec.json(f"{stem}_trajectory.json", {
        "alpha": ctx.params.alpha, "x_max": grid.x_max, "n_points": grid.n, "h": grid.h,
        "dt": ctx.dt, "record_dt": ctx.record_dt, "reference": "discrete soliton Q_h",
        "columns": list(table), "segments": result.segments,
        "fields": "perturbation u = phi - (Q_h, 0) sampled every 0.5 on [0, 20]"})
    return path


def run_shot(cfg: LabConfig, ctx: LabContext, eps: AdmissiblePerturbation,
             shooting: ShootingConfig | None = None) -> tuple[ShootingResult, dict, float]:
    """Shoot, analyse a trapped run, and return the wall-clock seconds spent."""
    shooting = shooting or cfg.shooting
    t0 = time.perf_counter()
    res = shoot(eps, shooting, ctx, analyze=False)
    diag: dict = {}
    if res.trapped:
        diag = analyze_trapped(res, ctx, delta0=shooting.delta0, weights=_weights_for(cfg, ctx))
        res.decay_integral = diag.get("decay_integral")
    return res, diag, time.perf_counter() - t0


def shot_summary(res: ShootingResult, diag: dict, eps: AdmissiblePerturbation) -> dict:
    out = res.to_json()
    out["epsilon_norm"] = eps.norm
    out["bisection_width"] = res.width
    out["probes"] = res.probes
    out["segments"] = len(res.segments)
    out["h_constant"] = abs(res.b_plus_0) / eps.norm ** 1.5 if eps.norm > 0 else 0.0
    if diag:
        for k in ("decay_integral", "decay_tail_share", "G_integral", "G_tail_share",
                  "G_rate_constant", "G_decay_factor", "modal_initial_max", "modal_final_max"):
            if k in diag:
                out[k] = diag[k]
        if "bootstrap" in diag:
            out["bootstrap"] = diag["bootstrap"]
        if "weights" in diag:
            out["weights"] = diag["weights"]
        stab = diag.get("stability", {})
        out["stability_positive"] = stab.get("positive")
        if stab.get("windows"):
            out["local_distance"] = {k: v for k, v in stab["windows"][0].items() if k != "distance"}
        if "inequalities" in diag:
            out["inequalities"] = diag["inequalities"].to_json()
    return out


def _virial_plots(rec: Recorder, stem: str, diag: dict) -> None:
    records = diag.get("records")
    if not records:
        return
    t = series_array(records, "t")
    rec.plot(f"{stem}_functionals.svg",
             {k: (t, series_array(records, f"{k}_val")) for k in ("I", "J", "H", "B", "G")},
             title="virial functionals", xlabel="t")
    dH = series_array(records, "dH")
    w2 = series_array(records, "w_loc") ** 2
    a1 = series_array(records, "a1")
    rec.plot(f"{stem}_H_margin.svg",
             {"dH/dt": (t, dH), "-|w|_loc^2": (t, -w2), "2|a1|^3 - dH/dt": (t, 2 * np.abs(a1) ** 3 - dH)},
             title="H virial: derivative against the local norm", xlabel="t")
    rec.plot(f"{stem}_modal.svg",
             {"|a1|": (t, np.abs(a1)), "|a2|": (t, np.abs(series_array(records, "a2"))),
              "|w|_loc": (t, series_array(records, "w_loc"))},
             title="modal coordinates", xlabel="t", logy=True)


def recipe_shoot(cfg: LabConfig, rec: Recorder) -> dict:
    ctx = shooting_context(cfg)
    seeds = [cfg.seed + k for k in range(cfg.perturbation.seeds)] if cfg.perturbation.kind == "random" else [cfg.seed]
    rows = []
    for seed in seeds:
        eps = make_perturbation(cfg, ctx, seed)
        res, diag, secs = run_shot(cfg, ctx, eps)
        stem = f"shoot_seed{seed}"
        res.archive_path = str(archive_run(res, ctx, rec, stem, diag).relative_to(rec.out_dir))
        row = shot_summary(res, diag, eps)
        row["seed"] = seed
        rec.timings[f"{stem}_seconds"] = secs
        rec.json(f"{stem}.json", row)
        _virial_plots(rec, stem, diag)
        if diag.get("stability", {}).get("windows"):
            w = diag["stability"]["windows"][0]
            rec.plot(f"{stem}_local_distance.svg", {"[-5, 5]": (res.times, w["distance"])},
                     title="local distance to the soliton", xlabel="t", logy=True)
        rows.append(row)
        rec.check(f"{stem}_trapped", res.trapped, res.verdict, "verdict trapped_to_t_max")
        rec.check(f"{stem}_iterations", res.iterations <= 40, res.iterations, "<= 40")
        res.states.clear()
    rec.json("shoot_summary.json", rows)
    return {"shoot": rows}


# -- shooting suites ------------------------------------------------------------------

def shooting_suite(cfg: LabConfig, rec: Recorder, seeds: Sequence[int], alpha: float | None = None,
                   controls: bool = True) -> dict:
    """Shots for several seeds with the shape, decay and audit checks of trapped runs."""
    ctx = shooting_context(cfg, alpha)
    size = cfg.perturbation.size
    sc = cfg.shooting

    def unit(seed: int):
        eps = random_admissible(ctx.sd, size, seed)
        res, diag, secs = run_shot(cfg, ctx, eps)
        row = shot_summary(res, diag, eps)
        row["seed"] = seed
        if controls:
            row["controls"] = [off_manifold_control(eps, s, sc, ctx) for s in (1, -1)]
        archive = archive_run(res, ctx, rec, f"suite_seed{seed}", diag)
        res.archive_path = str(archive.relative_to(rec.out_dir))
        row["archive_path"] = res.archive_path
        if seed == seeds[0]:
            _virial_plots(rec, f"suite_seed{seed}", diag)
        res.states.clear()
        return row, secs

    out = parallel_map(unit, list(seeds))
    rows = [r for r, _ in out]
    for (row, secs) in out:
        rec.timed_check(f"shoot_runtime_seed{row['seed']}", secs, 300.0)
    rec.json("shooting_suite.json", rows)
    return {"rows": rows, "alpha": ctx.params.alpha, "x_max": ctx.grid.x_max}


def grade_shooting(rows: Sequence[dict], size: float, rec: Recorder) -> None:
    """Checks on iteration count, trapping, tube size, the ``h`` bound and the controls."""
    iters = [r["iterations"] for r in rows]
    rec.check("shooting_iterations", max(iters) <= 40, iters, "<= 40 for every seed")
    verdicts = [r["verdict"] for r in rows]
    rec.check("shooting_trapped", all(v == "trapped_to_t_max" for v in verdicts), verdicts,
              "every seed trapped to t_max")
    tube = [r["tube_max_distance"] for r in rows]
    rec.check("shooting_tube", max(tube) <= 5 * size, tube, f"<= 5 |eps| = {5 * size:g}")
    cs = [r["h_constant"] for r in rows]
    rec.check("shooting_h_bound", max(cs) <= 100, max(cs), "|h| <= C |eps|^(3/2) with C <= 100")
    rates = [c["rate_ratio"] for r in rows for c in r.get("controls", [])]
    exits = [c["verdict"] for r in rows for c in r.get("controls", [])]
    signs = [c["sign"] for r in rows for c in r.get("controls", [])]
    ok_exit = all(v == ("exited_plus" if s > 0 else "exited_minus") for v, s in zip(exits, signs))
    rec.check("off_manifold_exit", ok_exit and bool(exits), exits, "exit on the side of b+(0)")
    rec.check("off_manifold_rate", bool(rates) and max(abs(r - 1) for r in rates) <= 0.05, rates,
              "growth rate within 5% of nu0")


def grade_decay(rows: Sequence[dict], rec: Recorder) -> None:
    trapped = [r for r in rows if r["verdict"] == "trapped_to_t_max"]
    if not trapped:
        rec.check("decay_runs", False, 0, "at least one trapped run")
        return
    ints = [r.get("decay_integral") for r in trapped]
    tails = [r.get("decay_tail_share") for r in trapped]
    rec.check("decay_integral_finite", all(v is not None and math.isfinite(v) for v in ints), ints,
              "finite time integral of a1^2 + a2^2 + |w|_loc^2")
    rec.check("decay_integral_tail", all(t is not None and t <= 0.2 for t in tails), tails,
              "share of [50, 100] <= 20%")
    ratios = [r["local_distance"]["ratio"] for r in trapped]
    rec.check("local_distance_decay", all(v <= 0.1 for v in ratios), ratios,
              "final/initial 10%-window mean on [-5, 5] <= 0.1")
    gc = [r.get("G_rate_constant") for r in trapped]
    rec.check("G_rate_constant", all(c is not None and math.isfinite(c) for c in gc), gc,
              "|dG/dt| <= c (a1^2 + G) with finite c")
    gd = [r.get("G_decay_factor") for r in trapped]
    rec.check("G_decay", all(d is not None and d >= 10 for d in gd), gd, "G decays by >= 10x")


def grade_virial(rows: Sequence[dict], rec: Recorder) -> None:
    trapped = [r for r in rows if r["verdict"] == "trapped_to_t_max" and "inequalities" in r]
    if not trapped:
        rec.check("virial_runs", False, 0, "at least one trapped run")
        return
    c3, share, c4 = [], [], []
    for r in trapped:
        ent = {e["name"]: e for e in r["inequalities"]}
        c3.append(ent["virial_H"]["fitted_constant"])
        share.append(ent["virial_H"]["positive_share"])
        c4.append(ent["virial_B"]["fitted_constant"])
    rec.check("virial_H_c3", all(c is not None and c > 0 for c in c3), {"c3": c3, "positive_share": share},
              "c3 > 0 valid at >= 99% of samples above the noise floor")
    rec.check("virial_B_c4", all(c is not None and math.isfinite(c) for c in c4), c4, "finite c4")


def lipschitz_report(cfg: LabConfig, deltas: Sequence[float], members: int, seed: int) -> dict:
    horizon = cfg.shooting.probe_horizon
    ctx = LabContext.for_horizon(cfg.model.alpha, horizon, spacing=cfg.model.spacing,
                                 min_half_length=cfg.model.domain_half_length, dt=cfg.integrator.dt)
    out = {"alpha": cfg.model.alpha, "deltas": []}

    def unit(delta: float):
        sc = dataclasses.replace(cfg.shooting, delta0=delta, bracket=None, bisection_tol=None)
        fam = perturbation_family(ctx.sd, 0.5 * delta, seed, members)
        rep = lipschitz_probe(list(zip(fam[:-1], fam[1:])), sc, ctx)
        anti = lipschitz_probe([(fam[0], fam[0].scaled(-1.0))], sc, ctx)
        rep["antisymmetric_ratio"] = anti["max_ratio"]
        rep["size"] = 0.5 * delta
        return rep

    out["deltas"] = parallel_map(unit, list(deltas))
    return out


def grade_lipschitz(rep: dict, rec: Recorder) -> None:
    mx = [d["max_ratio"] for d in rep["deltas"]]
    rec.check("lipschitz_finite", all(math.isfinite(v) for v in mx), mx, "finite max ratio at every delta")
    pairs = [len(d["pairs"]) for d in rep["deltas"]]
    rec.check("lipschitz_pairs", all(p >= 6 for p in pairs), pairs, ">= 6 pairs per delta")
    dec = all(b < a for a, b in zip(mx, mx[1:]))
    rec.check("lipschitz_decreasing", dec, mx, "max ratio decreases as delta decreases")


def recipe_virial_audit(cfg: LabConfig, rec: Recorder) -> dict:
    rep = virial_static_report(cfg.model, cfg.seed)
    ratios = [r["ratio"] for r in rep["identity"]]
    rec.check("virial_identity_order", all(3.5 <= r <= 4.5 for r in ratios), ratios,
              "identity residual ratio under h -> h/2 in [3.5, 4.5]")
    rec.check("nonlinear_claim", rep["claim_violations"] == 0, rep["claim_violations"],
              "zero violations of the explicit-constant claim")
    rec.json("virial_static.json", rep)
    params = cfg.model
    grid = Grid.from_params(params)
    scan = positivity_scan(params, grid)
    rec.json("positivity.json", scan)
    B = scan["B0"] or 32.0
    pot = repulsive_potential(make_weights(B ** 2, B, cfg.weights.gamma, grid), params, grid)
    keep = grid.nodes <= 10
    rec.csv("potential.csv", {"x": grid.nodes, "V": pot.V, "V0": pot.V0})
    rec.plot("potential.svg", {"V": (grid.nodes[keep], pot.V[keep]), "V0": (grid.nodes[keep], pot.V0[keep])},
             title=f"repulsive potential, B={B:g}", xlabel="x")
    rows = shooting_suite(cfg, rec, [cfg.seed], controls=False)["rows"]
    grade_virial(rows, rec)
    return {"virial_static": rep, "positivity": scan, "shots": rows}


def recipe_decay(cfg: LabConfig, rec: Recorder) -> dict:
    rows = shooting_suite(cfg, rec, [cfg.seed], controls=False)["rows"]
    grade_decay(rows, rec)
    return {"shots": rows}


def recipe_lipschitz(cfg: LabConfig, rec: Recorder) -> dict:
    rep = lipschitz_report(cfg, cfg.study.lipschitz_deltas, cfg.study.lipschitz_members, cfg.seed)
    rec.json("lipschitz.json", rep)
    grade_lipschitz(rep, rec)
    return {"lipschitz": rep}


def recipe_sweep_alpha(cfg: LabConfig, rec: Recorder) -> dict:
    table = {"alpha": [], "b_plus_0": [], "trapped": [], "decay_integral": [], "decay_tail_share": [],
             "local_ratio": [], "G_decay_factor": []}
    rows = []
    for a in cfg.study.alphas:
        r = shooting_suite(cfg, rec, [cfg.seed], alpha=float(a), controls=False)["rows"][0]
        r["alpha"] = float(a)
        rows.append(r)
        table["alpha"].append(a)
        table["b_plus_0"].append(r["b_plus_0"])
        table["trapped"].append(1.0 if r["verdict"] == "trapped_to_t_max" else 0.0)
        table["decay_integral"].append(r.get("decay_integral") or np.nan)
        table["decay_tail_share"].append(r.get("decay_tail_share", np.nan))
        table["local_ratio"].append(r.get("local_distance", {}).get("ratio", np.nan))
        table["G_decay_factor"].append(r.get("G_decay_factor", np.nan))
        os.replace(rec.path("shooting_suite.json"), rec.path(f"sweep_alpha_{a:g}.json"))
        rec.files = [f for f in rec.files if f.name != "shooting_suite.json"] + [rec.path(f"sweep_alpha_{a:g}.json")]
    rec.csv("sweep_alpha.csv", table)
    rec.json("sweep_alpha.json", rows)
    return {"sweep": rows}


RECIPE_FUNCTIONS: dict[str, Callable[[LabConfig, Recorder], dict]] = {
    "spectrum": recipe_spectrum,
    "factorization": recipe_factorization,
    "linear_modes": recipe_linear_modes,
    "virial_audit": recipe_virial_audit,
    "shoot": recipe_shoot,
    "lipschitz": recipe_lipschitz,
    "decay": recipe_decay,
    "sweep_alpha": recipe_sweep_alpha,
}


# -- full assertion suite ----------------------------------------------------------------

def check_suite(cfg: LabConfig, rec: Recorder) -> dict:
    """Everything ``lab check`` asserts, grouped by theme."""
    results: dict = {}
    with _stage(rec, "spectrum"):
        results["spectrum"] = recipe_spectrum(cfg, rec, cfg.study.spectrum_alphas)["spectrum"]
    with _stage(rec, "factorization"):
        results["factorization"] = recipe_factorization(cfg, rec)["factorization"]
    with _stage(rec, "dynamics"):
        results["linear_modes"] = recipe_linear_modes(cfg, rec)["linear_modes"]
    with _stage(rec, "virial_static"):
        rep = virial_static_report(cfg.model, cfg.seed)
        ratios = [r["ratio"] for r in rep["identity"]]
        rec.check("virial_identity_order", all(3.5 <= r <= 4.5 for r in ratios), ratios,
                  "identity residual ratio under h -> h/2 in [3.5, 4.5]")
        rec.check("nonlinear_claim", rep["claim_violations"] == 0, rep["claim_violations"],
                  "zero violations of the explicit-constant claim")
        rec.json("virial_static.json", rep)
        results["virial_static"] = rep
    with _stage(rec, "positivity"):
        pos = positivity_report((1.0, 1.5, 2.0, 3.0), cfg.model)
        rec.json("positivity.json", pos)
        for a in ("1.5", "2", "3"):
            b0 = pos[a]["B0"]
            rec.check(f"potential_positivity_alpha_{a}", b0 is not None and b0 <= 32, b0,
                      "B0 <= 32 with V - V0 >= 0 and V0 >= 0 for all tested B >= B0")
        rec.check("potential_degenerate_alpha_1", pos["1"]["degenerate_V0"], pos["1"]["degenerate_V0"],
                  "V0 identically zero detected at alpha = 1")
        results["positivity"] = pos
    with _stage(rec, "shooting"):
        seeds = [cfg.seed + k for k in range(cfg.perturbation.seeds)]
        suite = shooting_suite(cfg, rec, seeds)
        grade_shooting(suite["rows"], cfg.perturbation.size, rec)
        grade_decay(suite["rows"], rec)
        grade_virial(suite["rows"], rec)
        results["shooting"] = suite
    with _stage(rec, "lipschitz"):
        lip = lipschitz_report(cfg, cfg.study.lipschitz_deltas, cfg.study.lipschitz_members, cfg.seed)
        rec.json("lipschitz.json", lip)
        grade_lipschitz(lip, rec)
        results["lipschitz"] = lip
    return results


class _stage:
    """Context manager timing a suite stage into ``rec.timings``."""

    def __init__(self, rec: Recorder, name: str):
        self.rec, self.name = rec, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        log.info("stage %s", self.name)
        return self

    def __exit__(self, *exc):
        self.rec.timings[f"stage_{self.name}"] = time.perf_counter() - self.t0
        return False
