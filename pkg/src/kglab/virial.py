"""Virial functionals, the repulsive potential and inequality audits along trajectories.

Identities and explicit-constant claims are hard checks. Every inequality
that only asserts the existence of a constant is turned into a fitted
constant: the smallest (or largest) value making it hold over the samples
that clear the derivative noise floor.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .decomposition import ModalState, uniform_spacing
from .domain import Grid, ModelParams, soliton_closed_form
from .errors import InsufficientSamples
from .transform import (TransformedState, WeightFamily, local_norm, make_weights,
                        transformed_state)

log = logging.getLogger(__name__)

NOISE_FACTOR = 10.0


@dataclass(frozen=True)
class VirialRecord:
    t: float
    I_val: float
    J_val: float
    H_val: float
    B_val: float
    K_val: float
    G_val: float
    w_loc: float
    z_loc: float
    a1_abs: float
    dI: float | None = None
    dJ: float | None = None
    dH: float | None = None
    dB: float | None = None
    dK: float | None = None
    dG: float | None = None
    # auxiliary quantities used by the audits
    a1: float = 0.0
    a2: float = 0.0
    b_plus: float = 0.0
    b_minus: float = 0.0
    dw_sq: float = 0.0
    w_sech: float = 0.0
    u1_h1: float = 0.0
    u2_l2: float = 0.0
    v1_h1: float = 0.0
    v2_l2: float = 0.0


FUNCTIONALS = ("I", "J", "H", "B", "K", "G")


def evaluate_functionals(modal: ModalState, transformed: TransformedState,
                         weights: WeightFamily, sd, delta: float) -> VirialRecord:
    """All six functionals at one time, derivative fields left empty."""
    grid = sd.grid
    u1, u2 = modal.u1, modal.u2
    du1 = grid.d1(u1)
    I = grid.inner(weights.phi_A * du1 + 0.5 * weights.zeta_A ** 2 * u1, u2)
    v1, v2 = transformed.v1, transformed.v2
    dv1 = grid.d1(v1)
    J = grid.inner(weights.psi_B * dv1 + 0.5 * weights.dpsi_B * v1, v2)
    H = J + 8.0 * delta ** 0.1 * I
    sech = 1.0 / np.cosh(grid.nodes)
    K = grid.inner(u1 * u2, sech)
    G = 0.5 * grid.inner(du1 ** 2 + u1 ** 2 + u2 ** 2, sech)
    w = transformed.w
    dw = grid.d1(w)
    return VirialRecord(
        t=modal.t, I_val=I, J_val=J, H_val=H,
        B_val=modal.b_plus ** 2 - modal.b_minus ** 2, K_val=K, G_val=G,
        w_loc=local_norm(w, grid), z_loc=local_norm(transformed.z, grid),
        a1_abs=abs(modal.a1), a1=modal.a1, a2=modal.a2,
        b_plus=modal.b_plus, b_minus=modal.b_minus,
        dw_sq=grid.inner(dw, dw), w_sech=grid.inner(w * w, 1.0 / np.cosh(grid.nodes / 2)),
        u1_h1=grid.h1_norm(u1), u2_l2=grid.norm(u2),
        v1_h1=grid.h1_norm(v1), v2_l2=grid.norm(v2))


def centered_derivative(values: np.ndarray, dt: float) -> np.ndarray:
    """Centered difference; NaN at the two endpoints."""
    out = np.full(values.shape, np.nan)
    out[1:-1] = (values[2:] - values[:-2]) / (2.0 * dt)
    return out


def derivative_noise(values: np.ndarray, dt: float) -> np.ndarray:
    """Truncation-error estimate ``|D_2dt - D_dt| / 3`` of the centered difference.

    Undefined (infinite) at the two samples next to each endpoint.
    """
    out = np.full(values.shape, np.inf)
    if values.size >= 5:
        d1 = (values[3:-1] - values[1:-3]) / (2.0 * dt)
        d2 = (values[4:] - values[:-4]) / (4.0 * dt)
        out[2:-2] = np.abs(d2 - d1) / 3.0
    return out


def series_array(records: Sequence[VirialRecord], name: str) -> np.ndarray:
    return np.array([getattr(r, name) if getattr(r, name) is not None else np.nan
                     for r in records], dtype=float)


def differentiate_series(records: Sequence[VirialRecord]) -> list[VirialRecord]:
    """Fill ``dI ... dG`` by centered differences at interior samples."""
    if len(records) < 3:
        raise InsufficientSamples(f"need at least 3 records, got {len(records)}")
    dt = uniform_spacing(np.array([r.t for r in records]))
    derivs = {f"d{k}": centered_derivative(series_array(records, f"{k}_val"), dt)
              for k in FUNCTIONALS}
    out = []
    for i, r in enumerate(records):
        interior = 0 < i < len(records) - 1
        out.append(dataclasses.replace(
            r, **{k: (float(v[i]) if interior else None) for k, v in derivs.items()}))
    return out


def virial_series(modal_series: Sequence[ModalState], weights: WeightFamily, sd,
                  delta: float) -> list[VirialRecord]:
    recs = [evaluate_functionals(m, transformed_state(m, weights, sd), weights, sd, delta)
            for m in modal_series]
    return differentiate_series(recs) if len(recs) >= 3 else recs


# -- identities and explicit-constant claims -----------------------------------

def virial_identity_sides(u1: np.ndarray, weights: WeightFamily, grid: Grid,
                          scale: float | None = None) -> tuple[float, float]:
    """Both sides of the integration-by-parts identity behind the ``I`` virial."""
    scale = weights.scale_A if scale is None else scale
    zeta = weights.zeta(scale)
    phi = weights.phi(scale)
    du = grid.d1(u1)
    lhs = grid.inner(phi * du + 0.5 * zeta ** 2 * u1, grid.d2(u1) - u1)
    w = zeta * u1
    dw = grid.d1(w)
    rhs = -grid.inner(dw, dw) - 0.5 * grid.inner(weights.log_zeta_second(scale) * w, w)
    return lhs, rhs


def check_virial_identity(u1: np.ndarray, weights: WeightFamily, grid: Grid) -> float:
    """``|LHS - RHS|`` of the identity; converges at order ``h^2``."""
    lhs, rhs = virial_identity_sides(u1, weights, grid)
    return abs(lhs - rhs)


def nonlinear_claim(u1: np.ndarray, weights: WeightFamily, alpha: float,
                    grid: Grid) -> tuple[float, float]:
    """``(lhs, rhs)`` of ``int zeta_A^2 |u1|^(2a+2) <= (4/3) ((a+1)/a)^2 A^2 |u1|_inf^(2a) int (w')^2``."""
    A = weights.scale_A
    zeta = weights.zeta_A
    lhs = grid.integrate(zeta ** 2 * np.abs(u1) ** (2 * alpha + 2))
    dw = grid.d1(zeta * u1)
    const = (4.0 / 3.0) * ((alpha + 1) / alpha) ** 2
    rhs = const * A ** 2 * np.max(np.abs(u1)) ** (2 * alpha) * grid.inner(dw, dw)
    return lhs, rhs


# -- repulsive potential ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RepulsivePotential:
    V: np.ndarray
    V0: np.ndarray
    scale_B: float

    @property
    def min_gap(self) -> float:
        return float(np.min(self.V - self.V0))

    @property
    def min_v0(self) -> float:
        return float(np.min(self.V0))

    @property
    def degenerate(self) -> bool:
        """True when ``V0`` vanishes identically (``alpha = 1``)."""
        return bool(np.max(np.abs(self.V0)) == 0.0)


def repulsive_potential(weights: WeightFamily, params: ModelParams, grid: Grid) -> RepulsivePotential:
    a = params.alpha
    x = grid.nodes
    B = weights.scale_B
    q = soliton_closed_form(x, a)
    dq = -np.tanh(a * x) * q
    coef = a * (a - 1) / (a + 1)
    zeta = weights.zeta_B
    ratio = weights.phi_B / zeta ** 2
    V = 0.5 * weights.log_zeta_second(B) - coef * ratio * q ** (2 * a - 1) * dq
    V0 = 0.5 * coef * np.abs(x * dq) * q ** (2 * a - 1)
    return RepulsivePotential(V, V0, B)


def positivity_scan(params: ModelParams, grid: Grid,
                    scales: Sequence[float] = tuple(2.0 ** k for k in range(1, 12)),
                    gamma: float = 0.05) -> dict:
    """Scan ``B`` and locate the smallest tested ``B0`` above which ``V >= V0 >= 0`` holds."""
    rows = []
    for B in scales:
        pot = repulsive_potential(make_weights(B ** 2, B, gamma, grid), params, grid)
        rows.append({"B": float(B), "min_gap": pot.min_gap, "min_V0": pot.min_v0,
                     "ok": pot.min_gap >= 0 and pot.min_v0 >= 0})
    b0 = None
    for i in range(len(rows)):
        if all(r["ok"] for r in rows[i:]):
            b0 = rows[i]["B"]
            break
    degenerate = bool(params.alpha == 1.0)
    if degenerate:
        pot = repulsive_potential(make_weights(4.0, 2.0, gamma, grid), params, grid)
        degenerate = pot.degenerate
    return {"alpha": params.alpha, "scan": rows, "B0": b0, "degenerate_V0": degenerate}


# -- inequality audits ------------------------------------------------------------

@dataclass
class InequalityEntry:
    name: str
    paper_eq: str
    worst_margin: float
    fitted_constant: float
    violation_count: int
    noise_floor: float
    hard: bool = False
    samples_used: int = 0
    extra: dict = field(default_factory=dict)

    def passed(self) -> bool:
        if self.hard:
            return self.violation_count == 0
        return bool(np.isfinite(self.fitted_constant))

    def to_json(self) -> dict:
        d = {"name": self.name, "paper_eq": self.paper_eq,
             "worst_margin": _clean(self.worst_margin),
             "fitted_constant": _clean(self.fitted_constant),
             "violation_count": int(self.violation_count),
             "noise_floor": _clean(self.noise_floor)}
        d.update({"hard": self.hard, "samples_used": self.samples_used})
        d.update({k: _clean(v) for k, v in self.extra.items()})
        return d


def _clean(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not np.isfinite(v):
            return None if np.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


@dataclass
class InequalityReport:
    entries: list[InequalityEntry]

    def __getitem__(self, name: str) -> InequalityEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_json(self) -> list[dict]:
        return [e.to_json() for e in self.entries]

    def hard_failures(self) -> list[str]:
        return [e.name for e in self.entries if e.hard and e.violation_count > 0]


def _upper_constant(excess: np.ndarray, scale: np.ndarray, mask: np.ndarray) -> float:
    """Smallest ``c >= 0`` with ``excess <= c * scale`` on ``mask`` (inf if impossible)."""
    e, s = excess[mask], scale[mask]
    if e.size == 0:
        return np.nan
    pos = e > 0
    if not np.any(pos):
        return 0.0
    if np.any(pos & (s <= 0)):
        return np.inf
    return float(np.max(e[pos] / s[pos]))


def _lower_constant(slack: np.ndarray, scale: np.ndarray, mask: np.ndarray,
                    quantile: float = 0.0) -> float:
    """Largest ``c`` with ``c * scale <= slack`` at a ``1 - quantile`` share of ``mask``."""
    sl, s = slack[mask], scale[mask]
    good = s > 0
    if not np.any(good):
        return np.nan
    ratios = np.where(good, sl / np.where(good, s, 1.0), np.where(sl >= 0, np.inf, -np.inf))
    return float(np.quantile(ratios, quantile, method="lower")) if quantile > 0 else float(np.min(ratios))


def check_inequalities(records: Sequence[VirialRecord], sd, tube_delta: float,
                       weights: WeightFamily | None = None,
                       coverage: float = 0.99) -> InequalityReport:
    """Audit the differential inequalities along a recorded series.

    ``records`` must already carry derivatives (see :func:`differentiate_series`).
    Samples whose margin is within ``NOISE_FACTOR`` times the derivative
    truncation estimate are excluded from sign decisions.
    """
    if len(records) < 5:
        raise InsufficientSamples("need at least 5 records for the inequality audit")
    dt = uniform_spacing(np.array([r.t for r in records]))
    nu0 = sd.nu0
    g = lambda name: series_array(records, name)  # noqa: E731
    a1, a2 = g("a1"), g("a2")
    w2, z2 = g("w_loc") ** 2, g("z_loc") ** 2
    dw2, wsech = g("dw_sq"), g("w_sech")
    interior = np.zeros(len(records), bool)
    interior[1:-1] = True
    noise = {k: NOISE_FACTOR * derivative_noise(g(f"{k}_val"), dt) for k in FUNCTIONALS}
    entries = []

    def floor_of(mask, key):
        vals = noise[key][mask]
        vals = vals[np.isfinite(vals)]
        return float(np.median(vals)) if vals.size else np.nan

    # I virial: dI <= -1/2 int (w')^2 + C1 (int sech(x/2) w^2 + a1^4)
    dI = g("dI")
    excess = dI + 0.5 * dw2
    mask = interior & (np.abs(excess) > noise["I"])
    c1 = _upper_constant(excess, wsech + a1 ** 4, mask)
    entries.append(InequalityEntry(
        "virial_I", "dI/dt <= -1/2 int (w')^2 + C1 int sech(x/2) w^2 + C1 a1^4",
        float(np.min((c1 * (wsech + a1 ** 4) - excess)[mask])) if np.any(mask) and np.isfinite(c1) else np.nan,
        c1, 0 if np.isfinite(c1) or np.isnan(c1) else int(np.sum(mask)), floor_of(mask, "I"),
        samples_used=int(np.sum(mask))))

    # J virial: dJ <= -C2 |z|_loc^2 + delta^(1/8) |w|_loc^2 + |a1|^3
    dJ = g("dJ")
    slack = tube_delta ** 0.125 * w2 + np.abs(a1) ** 3 - dJ
    mask = interior & (np.abs(slack) > noise["J"])
    c2 = _lower_constant(slack, z2, mask)
    entries.append(InequalityEntry(
        "virial_J", "dJ/dt <= -C2 |z|_loc^2 + delta^(1/8) |w|_loc^2 + |a1|^3",
        float(np.min(slack[mask])) if np.any(mask) else np.nan, c2,
        int(np.sum(slack[mask] < 0)), floor_of(mask, "J"), samples_used=int(np.sum(mask))))

    # H virial: dH + c3 |w|_loc^2 <= 2 |a1|^3 at a `coverage` share of samples
    dH = g("dH")
    slack = 2.0 * np.abs(a1) ** 3 - dH
    mask = interior & (np.abs(slack) > noise["H"])
    c3 = _lower_constant(slack, w2, mask, quantile=1.0 - coverage)
    share = float(np.mean(slack[mask] > 0)) if np.any(mask) else np.nan
    entries.append(InequalityEntry(
        "virial_H", "dH/dt <= -C3 |w|_loc^2 + 2 |a1|^3",
        float(np.min((slack - max(c3, 0.0) * w2)[mask])) if np.any(mask) and np.isfinite(c3) else np.nan,
        c3, int(np.sum(slack[mask] <= 0)), floor_of(mask, "H"), samples_used=int(np.sum(mask)),
        extra={"positive_share": share, "coverage": coverage,
               "c3_min_all": _lower_constant(slack, w2, mask)}))

    # B monotonicity: dB >= nu0/2 (a1^2 + a2^2) - C4 |w|_loc^2
    dB = g("dB")
    deficit = 0.5 * nu0 * (a1 ** 2 + a2 ** 2) - dB
    mask = interior & (np.abs(deficit) > noise["B"])
    c4 = _upper_constant(deficit, w2, mask)
    entries.append(InequalityEntry(
        "virial_B", "dB/dt >= nu0/2 (a1^2 + a2^2) - C4 |w|_loc^2",
        float(np.min((c4 * w2 - deficit)[mask])) if np.any(mask) and np.isfinite(c4) else np.nan,
        c4, 0 if np.isfinite(c4) or np.isnan(c4) else int(np.sum(mask)), floor_of(mask, "B"),
        samples_used=int(np.sum(mask))))

    # combined: dB - 2 (C4/C3) dH >= nu0/4 (a1^2 + a2^2) + C4 |w|_loc^2
    if np.isfinite(c3) and c3 > 0 and np.isfinite(c4):
        lam = 2.0 * c4 / c3
        lhs = dB - lam * dH
        rhs = 0.25 * nu0 * (a1 ** 2 + a2 ** 2) + c4 * w2
        nfloor = noise["B"] + lam * noise["H"]
        margin = lhs - rhs
        mask = interior & (np.abs(margin) > nfloor)
        viol = int(np.sum(margin[mask] < 0))
        worst = float(np.min(margin[mask])) if np.any(mask) else np.nan
        fl = float(np.median(nfloor[mask & np.isfinite(nfloor)])) if np.any(mask) else np.nan
    else:
        lam, viol, worst, fl, mask = np.nan, 0, np.nan, np.nan, np.zeros_like(interior)
    entries.append(InequalityEntry(
        "combined_BH", "dB/dt - 2 (C4/C3) dH/dt >= nu0/4 (a1^2 + a2^2) + C4 |w|_loc^2",
        worst, lam, viol, fl, samples_used=int(np.sum(mask))))

    # exponential rates of b+^2 and b-^2
    bp, bm = g("b_plus"), g("b_minus")
    dbp2 = centered_derivative(bp ** 2, dt)
    dbm2 = centered_derivative(bm ** 2, dt)
    lhs = np.abs(dbp2 - 2 * nu0 * bp ** 2) + np.abs(dbm2 + 2 * nu0 * bm ** 2)
    nfl = NOISE_FACTOR * (derivative_noise(bp ** 2, dt) + derivative_noise(bm ** 2, dt))
    mask = interior & (lhs > nfl)
    c = _upper_constant(lhs, (bp ** 2 + bm ** 2 + w2) ** 1.5, mask)
    entries.append(InequalityEntry(
        "b_rates", "|d(b+^2)/dt - 2 nu0 b+^2| + |d(b-^2)/dt + 2 nu0 b-^2| <= C4 (b+^2 + b-^2 + |w|_loc^2)^(3/2)",
        np.nan, c, 0, float(np.median(nfl[np.isfinite(nfl)])) if np.any(np.isfinite(nfl)) else np.nan,
        samples_used=int(np.sum(mask))))

    # static coercivity links (no time derivative involved)
    B = weights.scale_B if weights is not None else tube_delta ** -0.25
    every = np.ones(len(records), bool)
    cA = _upper_constant(wsech, z2 + np.exp(-B) * dw2, every & (wsech > 0))
    entries.append(InequalityEntry(
        "coercivity_A", "int w^2 sech(x/2) <= C (|z|_loc^2 + exp(-B) |w'|^2)",
        np.nan, cA, 0, 0.0, samples_used=int(np.sum(wsech > 0))))
    cB = _upper_constant(w2, z2 + dw2, every & (w2 > 0))
    entries.append(InequalityEntry(
        "coercivity_B", "|w|_loc^2 <= C (|z|_loc^2 + |w'|^2)",
        np.nan, cB, 0, 0.0, samples_used=int(np.sum(w2 > 0))))

    # size bounds on I and J
    A = weights.scale_A if weights is not None else 1.0 / tube_delta
    cI = _upper_constant(np.abs(g("I_val")), A * g("u1_h1") * g("u2_l2"), every)
    cJ = _upper_constant(np.abs(g("J_val")), B * g("v1_h1") * g("v2_l2"), every)
    entries.append(InequalityEntry("size_I", "|I| <= c A |u1|_H1 |u2|_L2", np.nan, cI, 0, 0.0,
                                   samples_used=len(records)))
    entries.append(InequalityEntry("size_J", "|J| <= c B |v1|_H1 |v2|_L2", np.nan, cJ, 0, 0.0,
                                   samples_used=len(records)))
    return InequalityReport(entries)


# -- endgame ---------------------------------------------------------------------

def _trapz(y: np.ndarray, t: np.ndarray) -> float:
    return float(np.trapezoid(y, t)) if hasattr(np, "trapezoid") else float(np.trapz(y, t))


def tail_fraction(values: np.ndarray, times: np.ndarray) -> tuple[float, float]:
    """Total integral and the share contributed by the second half of the time span."""
    total = _trapz(values, times)
    half = times >= times[0] + 0.5 * (times[-1] - times[0])
    tail = _trapz(values[half], times[half])
    return total, (tail / total if total > 0 else 0.0)


def window_stat(values: np.ndarray, times: np.ndarray, fraction: float = 0.1,
                stat=np.mean) -> tuple[float, float]:
    """Statistic over the first and last ``fraction`` of the time span."""
    span = times[-1] - times[0]
    first = times <= times[0] + fraction * span
    last = times >= times[-1] - fraction * span
    return float(stat(values[first])), float(stat(values[last]))


def endgame_diagnostics(records: Sequence[VirialRecord], escaped: bool = False,
                        fraction: float = 0.1) -> dict:
    """Integrability and decay of ``a1^2 + a2^2 + G`` and ``G`` along a run."""
    t = series_array(records, "t")
    a1, a2 = series_array(records, "a1"), series_array(records, "a2")
    G = series_array(records, "G_val")
    w2 = series_array(records, "w_loc") ** 2
    if escaped:
        return {"status": "divergent", "escaped": True}
    total_w, tail_w = tail_fraction(a1 ** 2 + a2 ** 2 + w2, t)
    total_g, tail_g = tail_fraction(a1 ** 2 + a2 ** 2 + G, t)
    dt = uniform_spacing(t)
    dG = centered_derivative(G, dt)
    nfl = NOISE_FACTOR * derivative_noise(G, dt)
    mask = np.isfinite(dG) & (np.abs(dG) > nfl)
    c = _upper_constant(np.abs(dG), a1 ** 2 + G, mask)
    g0, g1 = window_stat(G, t, fraction, np.max)
    m0, m1 = window_stat(np.abs(a1) + np.abs(a2), t, fraction, np.max)
    return {
        "status": "ok", "escaped": False,
        "decay_integral": total_w, "decay_tail_share": tail_w,
        "G_integral": total_g, "G_tail_share": tail_g,
        "G_rate_constant": c, "G_initial_max": g0, "G_final_max": g1,
        "G_decay_factor": g0 / g1 if g1 > 0 else np.inf,
        "modal_initial_max": m0, "modal_final_max": m1,
    }
