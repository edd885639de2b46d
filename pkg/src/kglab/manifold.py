"""Shooting for the unstable-mode amplitude that keeps a trajectory trapped.

For admissible data ``eps`` (no component along ``Z+``) the initial state is
``(Q, 0) + eps + c Y+``. Values of ``c`` above the trapping value leave the
tube with ``b+ > 0``, values below with ``b+ < 0``, so bisection on ``c``
locates it. Each probe is stopped as soon as ``|b+|`` crosses the bracket
value while ``b+^2`` is increasing.

A single converged value only pins the unstable component to the bisection
width ``w``, and that error grows like ``w exp(nu0 t)``. The long run is
therefore split into segments: each segment lasts until the predicted
deviation reaches ``reshoot_deviation``, after which the unstable component
of the current state is corrected by a fresh bisection.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .decomposition import ModalState, decompose
from .domain import FieldPair, Grid, ModelParams, even_bump, pair_norm
from .dynamics import Stepper, boundary_energy
from .errors import BoundaryContamination, BracketFailure
from .spectral import SpectralData, spectral_data
from .transform import WeightFamily, local_distance, weights_from_delta
from .virial import (check_inequalities, endgame_diagnostics,
                     tail_fraction, virial_series, window_stat)

log = logging.getLogger(__name__)

VERDICTS = ("trapped_to_t_max", "exited_plus", "exited_minus", "boundary_contaminated")


# -- context -----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LabContext:
    """Model, grid, spectral data and integration settings shared by all runs."""

    params: ModelParams
    sd: SpectralData
    dt: float = 1e-3
    record_stride: int = 100
    gamma: float = 0.05
    boundary_layer: float = 5.0
    boundary_threshold: float = 1e-3
    strict_boundary: bool = False

    @property
    def grid(self) -> Grid:
        return self.sd.grid

    @property
    def record_dt(self) -> float:
        return self.dt * self.record_stride

    @classmethod
    def create(cls, params: ModelParams, **kwargs) -> "LabContext":
        sd = spectral_data(params)
        ctx = cls(params, sd, **kwargs)
        if ctx.dt > 0.5 * ctx.grid.h * (1 + 1e-12):
            raise ValueError(f"dt={ctx.dt} violates dt <= 0.5 h with h={ctx.grid.h}")
        return ctx

    @classmethod
    def for_horizon(cls, alpha: float, t_max: float, spacing: float = 0.01,
                    min_half_length: float = 40.0, **kwargs) -> "LabContext":
        """Domain long enough that waves reflected at ``X_max`` miss ``[-5, 5]`` before ``t_max``."""
        half = max(min_half_length, math.ceil(0.5 * t_max + 15.0))
        n = int(round(half / spacing)) + 1
        return cls.create(ModelParams(alpha, float(half), n), **kwargs)


# -- admissible data -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AdmissiblePerturbation:
    """Even perturbation with ``<eps, Z+> = 0``."""

    eps1: np.ndarray
    eps2: np.ndarray
    norm: float

    @property
    def pair(self) -> FieldPair:
        return FieldPair(self.eps1, self.eps2)

    def z_plus_component(self, sd: SpectralData) -> float:
        return sd.grid.inner(self.eps1, sd.Y0) + sd.grid.inner(self.eps2, sd.Y0) / sd.nu0

    def scaled(self, s: float) -> "AdmissiblePerturbation":
        return AdmissiblePerturbation(s * self.eps1, s * self.eps2, abs(s) * self.norm)


def admissible_from_raw(raw1: np.ndarray, raw2: np.ndarray, sd: SpectralData) -> AdmissiblePerturbation:
    """Remove the ``Y+`` part measured by ``Z+``: ``eps = raw - (<raw, Z+> / 2) Y+``.

    ``<Y+, Z+> = 2`` under ``<Y0, Y0> = 1``, so the result is ``Z+``-orthogonal.
    """
    grid = sd.grid
    raw1 = np.asarray(raw1, dtype=float).copy()
    raw2 = np.asarray(raw2, dtype=float).copy()
    raw1[-1] = raw2[-1] = 0.0
    c = 0.5 * (grid.inner(raw1, sd.Y0) + grid.inner(raw2, sd.Y0) / sd.nu0)
    e1 = raw1 - c * sd.modes.y_plus.phi1
    e2 = raw2 - c * sd.modes.y_plus.phi2
    return AdmissiblePerturbation(e1, e2, pair_norm(FieldPair(e1, e2), grid))


def random_raw(grid: Grid, rng: np.random.Generator, bumps: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Sums of ``bumps`` even Gaussians with centers in [0, 6] and widths in [0.5, 2]."""
    out = []
    for _ in range(2):
        f = np.zeros(grid.n)
        for _ in range(bumps):
            f += rng.normal() * even_bump(grid.nodes, rng.uniform(0.0, 6.0), rng.uniform(0.5, 2.0))
        out.append(f)
    return out[0], out[1]


def random_admissible(sd: SpectralData, size: float, seed: int | np.random.Generator) -> AdmissiblePerturbation:
    """Random bump data projected to the admissible set and scaled to ``size``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    eps = admissible_from_raw(*random_raw(sd.grid, rng), sd)
    return eps.scaled(size / eps.norm) if size > 0 else eps.scaled(0.0)


def zero_perturbation(sd: SpectralData) -> AdmissiblePerturbation:
    n = sd.grid.n
    return AdmissiblePerturbation(np.zeros(n), np.zeros(n), 0.0)


def perturbation_family(sd: SpectralData, size: float, seed: int, members: int = 7,
                        arc: float = 0.5 * np.pi) -> list[AdmissiblePerturbation]:
    """``members`` points on an arc between two random admissible directions, all of norm ``size``."""
    rng = np.random.default_rng(seed)
    r1 = random_admissible(sd, 1.0, rng)
    r2 = random_admissible(sd, 1.0, rng)
    family = []
    for theta in np.linspace(0.0, arc, members):
        e1 = np.cos(theta) * r1.eps1 + np.sin(theta) * r2.eps1
        e2 = np.cos(theta) * r1.eps2 + np.sin(theta) * r2.eps2
        n = pair_norm(FieldPair(e1, e2), sd.grid)
        family.append(AdmissiblePerturbation(e1 * size / n, e2 * size / n, size))
    return family


# -- configuration and results ------------------------------------------------------

@dataclass(frozen=True)
class ShootingConfig:
    """Tube radius, bracket and bisection controls.

    ``bracket`` defaults to ``K^5 delta0^2`` and ``bisection_tol`` to
    ``bracket * 2^-38``. The tube bound checked on trapped runs is
    ``K^2 delta0``.
    """

    delta0: float = 2e-3
    K: float = 4.0
    bracket: float | None = None
    t_max: float = 100.0
    bisection_tol: float | None = None
    max_iters: int = 40
    probe_horizon: float = 40.0
    check_every: int = 10
    reshoot_deviation: float = 1e-10
    reshoot_iters: int = 30

    def __post_init__(self) -> None:
        if not self.delta0 > 0:
            raise ValueError("delta0 must be positive")
        if not self.bracket_value > 0:
            raise ValueError("bracket must be positive")
        if not 0 < self.tol < self.bracket_value:
            raise ValueError("bisection_tol must lie in (0, bracket)")
        if self.max_iters < 1 or self.reshoot_iters < 1:
            raise ValueError("iteration limits must be positive")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")

    @property
    def bracket_value(self) -> float:
        return self.bracket if self.bracket is not None else self.K ** 5 * self.delta0 ** 2

    @property
    def tol(self) -> float:
        return self.bisection_tol if self.bisection_tol is not None else self.bracket_value * 2.0 ** -38

    @property
    def tube_bound(self) -> float:
        return self.K ** 2 * self.delta0


@dataclass(eq=False)
class ShootingResult:
    b_plus_0: float
    verdict: str
    exit_time: float | None
    iterations: int
    tube_max_distance: float
    decay_integral: float | None
    archive_path: str | None = None
    width: float = 0.0
    epsilon_norm: float = 0.0
    times: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    states: list[FieldPair] = field(default_factory=list, repr=False)
    tube_distance: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    boundary: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    segments: list[dict] = field(default_factory=list)
    probes: int = 0
    steps: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def trapped(self) -> bool:
        return self.verdict == "trapped_to_t_max"

    def to_json(self) -> dict:
        return {"b_plus_0": self.b_plus_0, "verdict": self.verdict, "exit_time": self.exit_time,
                "iterations": self.iterations, "tube_max_distance": self.tube_max_distance,
                "decay_integral": self.decay_integral, "archive_path": self.archive_path}


# -- probes and bisection -----------------------------------------------------------

class _Prober:
    """Runs ``start + c Y+`` until ``|b+|`` leaves the bracket."""

    def __init__(self, ctx: LabContext, start: FieldPair, threshold: float, horizon: float,
                 check_every: int):
        sd = ctx.sd
        self.ctx = ctx
        self.start = start
        self.threshold = threshold
        self.n_checks = max(1, int(round(horizon / (ctx.dt * check_every))))
        self.check_every = check_every
        self.wy = ctx.grid.weights * sd.Y0
        self.nu0 = sd.nu0
        self.calls = 0
        self.steps = 0

    def b_plus(self, u1: np.ndarray, u2: np.ndarray) -> float:
        return 0.5 * (float(self.wy @ u1) + float(self.wy @ u2) / self.nu0)

    def __call__(self, c: float) -> tuple[int, float | None]:
        """Exit sign (0 if none within the horizon) and elapsed time at exit."""
        ctx, sd = self.ctx, self.ctx.sd
        y = sd.modes.y_plus
        st = Stepper(FieldPair(self.start.phi1 + c * y.phi1, self.start.phi2 + c * y.phi2),
                     ctx.params, ctx.grid, ctx.dt, reference=sd.Q, ceiling=np.inf, perturbation=True)
        self.calls += 1
        prev = self.b_plus(st.u1, st.u2)
        for _ in range(self.n_checks):
            st.advance(self.check_every)
            self.steps += self.check_every
            b = self.b_plus(st.u1, st.u2)
            if not math.isfinite(b):
                return (1 if prev > 0 else -1), st.time
            if abs(b) >= self.threshold and b * b > prev * prev:
                return (1 if b > 0 else -1), st.time
            prev = b
        return 0, None


@dataclass
class _Bisection:
    center: float
    lo: float
    hi: float
    iterations: int
    trapped: bool


def _bisect(probe: _Prober, lo: float, hi: float, tol: float, max_iters: int,
            widen: float, widen_times: int) -> _Bisection:
    """Bisection after checking (and if needed widening) the bracket ``[lo, hi]``."""
    center = 0.5 * (lo + hi)
    for attempt in range(widen_times + 1):
        s_lo, t_lo = probe(lo)
        s_hi, t_hi = probe(hi)
        if s_lo < 0 and s_hi > 0:
            break
        if attempt == widen_times:
            raise BracketFailure(
                f"bracket [{lo:.3e}, {hi:.3e}] gives exits ({s_lo}, {s_hi}) at times ({t_lo}, {t_hi})",
                lo=(s_lo, t_lo), hi=(s_hi, t_hi))
        half = widen * 0.5 * (hi - lo)
        lo, hi = center - half, center + half
    it = 0
    while hi - lo > tol and it < max_iters:
        mid = 0.5 * (lo + hi)
        s, _ = probe(mid)
        it += 1
        if s > 0:
            hi = mid
        elif s < 0:
            lo = mid
        else:
            return _Bisection(mid, mid, mid, it, True)
    return _Bisection(0.5 * (lo + hi), lo, hi, it, False)


def _segment_length(width: float, deviation: float, nu0: float, record_dt: float) -> float:
    if width <= 0:
        return math.inf
    t = math.log(max(deviation / width, 1.0)) / nu0
    return max(record_dt, math.floor(t / record_dt + 1e-9) * record_dt)


# -- shooting ---------------------------------------------------------------------

def find_h(eps: AdmissiblePerturbation, config: ShootingConfig, ctx: LabContext) -> tuple[float, int, float]:
    """Bisection only: ``(h(eps), iterations, final width)``."""
    beta = config.bracket_value
    probe = _Prober(ctx, eps.pair, beta, config.probe_horizon, config.check_every)
    res = _bisect(probe, -beta, beta, config.tol, config.max_iters, 2.0, 1)
    return res.center, res.iterations, res.hi - res.lo


def shoot(eps: AdmissiblePerturbation, config: ShootingConfig, ctx: LabContext,
          store_states: bool = True, analyze: bool = True) -> ShootingResult:
    """Locate ``b+(0) = h(eps)`` and integrate the trapped candidate to ``t_max``.

    Raises :class:`BracketFailure` when the bracket ends do not exit on opposite
    sides (after one widening), and :class:`BoundaryContamination` in strict
    mode when energy reaching the far boundary could echo back into the
    central window before ``t_max``.
    """
    sd, grid = ctx.sd, ctx.grid
    beta = config.bracket_value
    if eps.norm >= config.delta0:
        log.warning("perturbation norm %.3g is not below delta0 %.3g", eps.norm, config.delta0)
    y = sd.modes.y_plus
    probe = _Prober(ctx, eps.pair, beta, min(config.probe_horizon, config.t_max), config.check_every)
    first = _bisect(probe, -beta, beta, config.tol, config.max_iters, 2.0, 1)
    h = first.center
    width = first.hi - first.lo
    probes, probe_steps = probe.calls, probe.steps

    stride = ctx.record_stride
    rdt = ctx.record_dt
    n_records = int(round(config.t_max / rdt))
    current = FieldPair(eps.eps1 + h * y.phi1, eps.eps2 + h * y.phi2)
    times: list[float] = []
    states: list[FieldPair] = []
    tube: list[float] = []
    bnd: list[float] = []
    segments: list[dict] = []
    verdict, exit_time = "trapped_to_t_max", None
    k = 0  # records completed
    e_scale = max(0.5 * eps.norm ** 2, 1e-300)
    wy = grid.weights * sd.Y0
    run_steps = 0

    def record(t: float, pert: FieldPair) -> None:
        times.append(t)
        d = pair_norm(pert, grid)
        tube.append(d)
        bnd.append(boundary_energy(pert, grid, ctx.boundary_layer))
        if store_states:
            states.append(pert)

    while k < n_records:
        seg_len = _segment_length(width, config.reshoot_deviation, sd.nu0, rdt)
        seg_records = min(n_records - k, int(round(seg_len / rdt)) if math.isfinite(seg_len) else n_records)
        st = Stepper(current, ctx.params, grid, ctx.dt, reference=sd.Q, ceiling=np.inf, perturbation=True)
        t0 = k * rdt
        segments.append({"t_start": t0, "width": width, "records": seg_records})
        record(t0, st.perturbation())
        prev_b = 0.5 * (float(wy @ st.u1) + float(wy @ st.u2) / sd.nu0)
        exited = False
        for j in range(seg_records):
            for _ in range(stride // config.check_every):
                st.advance(config.check_every)
                run_steps += config.check_every
                b = 0.5 * (float(wy @ st.u1) + float(wy @ st.u2) / sd.nu0)
                if (abs(b) >= beta and b * b > prev_b * prev_b) or not math.isfinite(b):
                    up = b > 0 if math.isfinite(b) else prev_b > 0
                    verdict = "exited_plus" if up else "exited_minus"
                    exit_time = t0 + st.time
                    exited = True
                    break
                prev_b = b
            if exited:
                break
            if stride % config.check_every:
                st.advance(stride % config.check_every)
                run_steps += stride % config.check_every
            k += 1
            # the last state of a non-final segment is recorded after its correction
            if j < seg_records - 1 or k == n_records:
                record(k * rdt, st.perturbation())
                if tube[-1] > config.tube_bound:
                    verdict = "exited_plus" if prev_b > 0 else "exited_minus"
                    exit_time = k * rdt
                    exited = True
                    break
        if exited or k >= n_records:
            break
        end = st.perturbation()
        # re-shoot the unstable component at the segment end
        dev = config.reshoot_deviation
        seg_probe = _Prober(ctx, end, beta, config.probe_horizon, config.check_every)
        res = _bisect(seg_probe, -4.0 * dev, 4.0 * dev, 8.0 * dev * 2.0 ** -config.reshoot_iters,
                      config.reshoot_iters, 4.0, 3)
        probes += seg_probe.calls
        probe_steps += seg_probe.steps
        segments[-1]["correction"] = res.center
        segments[-1]["iterations"] = res.iterations
        width = res.hi - res.lo
        current = FieldPair(end.phi1 + res.center * y.phi1, end.phi2 + res.center * y.phi2)
        if res.trapped:
            width = 0.0

    tarr = np.array(times)
    barr = np.array(bnd)
    if verdict == "trapped_to_t_max":
        bad = _contamination_time(tarr, barr, e_scale, ctx, config.t_max)
        if bad is not None:
            msg = f"boundary energy above threshold at t={bad:.2f}; echo reaches the centre before t_max"
            if ctx.strict_boundary:
                raise BoundaryContamination(msg)
            log.warning(msg)
            verdict = "boundary_contaminated"
    result = ShootingResult(
        b_plus_0=h, verdict=verdict, exit_time=exit_time, iterations=first.iterations,
        tube_max_distance=float(np.max(tube)) if tube else 0.0, decay_integral=None,
        width=first.hi - first.lo, epsilon_norm=eps.norm, times=tarr, states=states,
        tube_distance=np.array(tube), boundary=barr, segments=segments,
        probes=probes, steps=probe_steps + run_steps)
    if analyze and store_states and verdict == "trapped_to_t_max":
        result.diagnostics = analyze_trapped(result, ctx)
        result.decay_integral = result.diagnostics.get("decay_integral")
    return result


def _contamination_time(times: np.ndarray, boundary: np.ndarray, e_scale: float,
                        ctx: LabContext, t_max: float, window: float = 5.0) -> float | None:
    """First time boundary-layer energy exceeds the threshold early enough to echo into the window."""
    travel = ctx.grid.x_max - window
    hot = boundary > ctx.boundary_threshold * e_scale
    late = times + travel < t_max
    idx = np.flatnonzero(hot & late)
    return float(times[idx[0]]) if idx.size else None


# -- diagnostics ------------------------------------------------------------------

def modal_series(result: ShootingResult, ctx: LabContext) -> list[ModalState]:
    return [decompose(s, ctx.sd, t=t, perturbation=True) for t, s in zip(result.times, result.states)]


def bootstrap_constants(series: Sequence[ModalState], delta0: float, grid: Grid) -> dict:
    """Sup-in-time sizes of ``u``, ``b-`` and ``b+`` relative to ``delta0`` and ``delta0^2``."""
    u = max(float(np.hypot(grid.h1_norm(m.u1), grid.norm(m.u2))) for m in series)
    bm = max(abs(m.b_minus) for m in series)
    bp = max(abs(m.b_plus) for m in series)
    return {"u_sup": u, "b_minus_sup": bm, "b_plus_sup": bp,
            "u_over_delta0": u / delta0, "b_minus_over_delta0": bm / delta0,
            "b_plus_over_delta0_sq": bp / delta0 ** 2}


def analyze_trapped(result: ShootingResult, ctx: LabContext, delta0: float | None = None,
                    weights: WeightFamily | None = None) -> dict:
    """Virial series, inequality audit, decay integrals and the local-decay verdict.

    Weights default to the scales derived from the tube max-distance.
    """
    series = modal_series(result, ctx)
    delta = result.tube_max_distance
    out: dict = {"tube_max_distance": delta}
    if delta0 is not None:
        out["bootstrap"] = bootstrap_constants(series, delta0, ctx.grid)
    if not delta > 0:
        out.update({"decay_integral": 0.0, "decay_tail_share": 0.0, "stationary": True})
        out["stability"] = stability_verdict(result, ctx)
        return out
    if weights is None:
        weights = weights_from_delta(min(delta, 0.5), ctx.gamma, ctx.grid)
    records = virial_series(series, weights, ctx.sd, delta)
    out["records"] = records
    out["weights"] = {"A": weights.scale_A, "B": weights.scale_B, "gamma": weights.gamma}
    out.update(endgame_diagnostics(records))
    out["inequalities"] = check_inequalities(records, ctx.sd, delta, weights)
    out["stability"] = stability_verdict(result, ctx)
    return out


def stability_verdict(result: ShootingResult, ctx: LabContext,
                      windows: Sequence[tuple[float, float]] = ((-5.0, 5.0),),
                      fraction: float = 0.1, ratio: float = 0.1, tail_share: float = 0.2) -> dict:
    """Local ``H^1 x L^2`` decay on each symmetric window.

    Positive when the final-window mean is at most ``ratio`` times the
    initial-window mean and the second half of the time span carries at most
    ``tail_share`` of the time integral of the squared distance.
    """
    if not result.trapped:
        return {"positive": False, "in_scope": False,
                "reason": f"run not trapped ({result.verdict}); decay is not claimed outside the tube"}
    report = {"in_scope": True, "windows": []}
    positive = True
    for lo, hi in windows:
        if abs(lo + hi) > 1e-12:
            raise ValueError("windows must be symmetric intervals [-r, r] for even data")
        r = hi
        dist = np.array([local_distance(s, ctx.grid, r) for s in result.states])
        first, last = window_stat(dist, result.times, fraction)
        total, share = tail_fraction(dist ** 2, result.times)
        if first == 0.0:
            ok = last == 0.0
        else:
            ok = last <= ratio * first and share <= tail_share and math.isfinite(total)
        positive &= bool(ok)
        report["windows"].append({"interval": [lo, hi], "initial_mean": first, "final_mean": last,
                                  "ratio": last / first if first > 0 else 0.0,
                                  "integral": total, "tail_share": share, "positive": bool(ok),
                                  "distance": dist})
    report["positive"] = positive
    return report


# -- controls and Lipschitz probe ---------------------------------------------------

def off_manifold_control(eps: AdmissiblePerturbation, sign: int, config: ShootingConfig,
                         ctx: LabContext, growth: float = 8.0) -> dict:
    """Start at ``b+(0) = sign * bracket`` and fit the growth rate of ``|b+|``.

    The run continues until ``|b+|`` reaches ``growth * bracket``; the rate
    is the least-squares slope of ``log |b+|`` over that stretch.
    """
    beta = config.bracket_value
    sd = ctx.sd
    y = sd.modes.y_plus
    c = sign * beta
    st = Stepper(FieldPair(eps.eps1 + c * y.phi1, eps.eps2 + c * y.phi2), ctx.params, ctx.grid,
                 ctx.dt, reference=sd.Q, ceiling=np.inf, perturbation=True)
    wy = ctx.grid.weights * sd.Y0
    bp = lambda: 0.5 * (float(wy @ st.u1) + float(wy @ st.u2) / sd.nu0)  # noqa: E731
    ts, bs = [0.0], [bp()]
    exit_time = None
    prev = bs[0]
    limit = int(round(config.probe_horizon / (ctx.dt * config.check_every)))
    for _ in range(limit):
        st.advance(config.check_every)
        b = bp()
        ts.append(st.time)
        bs.append(b)
        if exit_time is None and abs(b) >= beta and b * b > prev * prev:
            exit_time = st.time
        prev = b
        if abs(b) >= growth * beta:
            break
    ts_a, bs_a = np.array(ts), np.array(bs)
    ok = np.abs(bs_a) > 0
    rate = float(np.polyfit(ts_a[ok], np.log(np.abs(bs_a[ok])), 1)[0]) if np.sum(ok) > 2 else np.nan
    final = bs_a[-1]
    return {"sign": sign, "b_plus_0": c, "exit_time": exit_time,
            "verdict": ("exited_plus" if final > 0 else "exited_minus") if exit_time is not None
            else "trapped_to_t_max",
            "rate": rate, "nu0": sd.nu0, "rate_ratio": rate / sd.nu0,
            "duration": float(ts_a[-1]), "final_b_plus": float(final)}


def lipschitz_probe(pairs: Sequence[tuple[AdmissiblePerturbation, AdmissiblePerturbation]],
                    config: ShootingConfig, ctx: LabContext) -> dict:
    """Ratios ``|h(e) - h(e~)| / |e - e~|`` over the given pairs.

    Each distinct perturbation is shot once (bisection only); identical
    objects shared between pairs reuse the computed value.
    """
    cache: dict[int, tuple[float, int, float]] = {}
    rows = []
    for e, f in pairs:
        dist = pair_norm(FieldPair(e.eps1 - f.eps1, e.eps2 - f.eps2), ctx.grid)
        if not dist > 0:
            raise ValueError("pairs must consist of distinct perturbations")
        for p in (e, f):
            if id(p) not in cache:
                cache[id(p)] = find_h(p, config, ctx)
        he, hf = cache[id(e)][0], cache[id(f)][0]
        width = max(cache[id(e)][2], cache[id(f)][2])
        rows.append({"h_a": he, "h_b": hf, "distance": dist,
                     "ratio": abs(he - hf) / dist, "resolution": width / dist})
    ratios = np.array([r["ratio"] for r in rows])
    mx = float(np.max(ratios)) if ratios.size else np.nan
    return {"delta": config.delta0, "pairs": rows, "max_ratio": mx,
            "constant": mx / math.sqrt(config.delta0), "finite": bool(np.all(np.isfinite(ratios)))}
