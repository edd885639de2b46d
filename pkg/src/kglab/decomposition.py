"""Modal coordinates around the soliton and the nonlinear remainder.

A state near ``(Q, 0)`` is written as

    phi1 = Q + a1 Y0 + u1,    phi2 = nu0 a2 Y0 + u2,

with ``<u1, Y0> = <u2, Y0> = 0`` and ``b+- = (a1 +- a2) / 2``. Because
``Y0`` and ``nu0`` are the exact discrete ground state of the discrete
``L``, the coordinates obey the modal ODE system of the semi-discrete flow
without any ``O(h^2)`` defect.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import FieldPair, nonlinearity, nonlinearity_prime
from .errors import InsufficientSamples
from .spectral import SpectralData


@dataclass(frozen=True, eq=False)
class ModalState:
    a1: float
    a2: float
    b_plus: float
    b_minus: float
    u1: np.ndarray
    u2: np.ndarray
    t: float = 0.0

    @classmethod
    def from_a(cls, a1: float, a2: float, u1: np.ndarray, u2: np.ndarray, t: float = 0.0) -> "ModalState":
        return cls(a1, a2, 0.5 * (a1 + a2), 0.5 * (a1 - a2), u1, u2, t)

    @classmethod
    def from_b(cls, b_plus: float, b_minus: float, u1: np.ndarray, u2: np.ndarray,
               t: float = 0.0) -> "ModalState":
        return cls(b_plus + b_minus, b_plus - b_minus, b_plus, b_minus, u1, u2, t)


@dataclass(frozen=True, eq=False)
class RemainderTerms:
    n_field: np.ndarray
    n0: float
    n_perp: np.ndarray


def decompose(state: FieldPair, sd: SpectralData, t: float = 0.0,
              perturbation: bool = False) -> ModalState:
    """Project ``state`` (or, with ``perturbation=True``, ``state - (Q, 0)``)."""
    grid, y0 = sd.grid, sd.Y0
    d1 = state.phi1 if perturbation else state.phi1 - sd.Q
    a1 = grid.inner(d1, y0)
    a2 = grid.inner(state.phi2, y0) / sd.nu0
    u1 = d1 - a1 * y0
    u2 = state.phi2 - (a2 * sd.nu0) * y0
    return ModalState.from_a(a1, a2, u1, u2, t)


def reconstruct(modal: ModalState, sd: SpectralData, perturbation: bool = False) -> FieldPair:
    phi1 = modal.a1 * sd.Y0 + modal.u1
    if not perturbation:
        phi1 = sd.Q + phi1
    return FieldPair(phi1, modal.a2 * sd.nu0 * sd.Y0 + modal.u2)


def remainder_terms(modal: ModalState, sd: SpectralData) -> RemainderTerms:
    """``N = f(Q + v) - f(Q) - f'(Q) v`` with ``v = a1 Y0 + u1``, and its split."""
    alpha = sd.alpha
    q = sd.Q
    v = modal.a1 * sd.Y0 + modal.u1
    n = nonlinearity(q + v, alpha) - nonlinearity(q, alpha) - nonlinearity_prime(q, alpha) * v
    n[-1] = 0.0
    n0 = sd.grid.inner(n, sd.Y0)
    return RemainderTerms(n, n0, n - n0 * sd.Y0)


def _centered(values: np.ndarray, dt: float) -> np.ndarray:
    return (values[2:] - values[:-2]) / (2.0 * dt)


def uniform_spacing(times: np.ndarray, rtol: float = 1e-6) -> float:
    if times.size < 3:
        raise InsufficientSamples(f"need at least 3 samples, got {times.size}")
    dts = np.diff(times)
    dt = float(np.mean(dts))
    if np.max(np.abs(dts - dt)) > rtol * max(dt, 1e-300) + 1e-12:
        raise ValueError("time samples must be uniformly spaced")
    return dt


def modal_ode_residual(series: Sequence[ModalState], sd: SpectralData) -> dict[str, np.ndarray]:
    """Centered-difference residuals of the modal system at interior samples.

    Keys ``a1, a2, b_plus, b_minus`` hold the scalar residuals; ``u1`` and
    ``u2`` the L^2 norms of ``u1' - u2`` and ``u2' + L u1 - N_perp``.
    """
    times = np.array([m.t for m in series])
    dt = uniform_spacing(times)
    nu0, grid = sd.nu0, sd.grid
    a1 = np.array([m.a1 for m in series])
    a2 = np.array([m.a2 for m in series])
    bp = np.array([m.b_plus for m in series])
    bm = np.array([m.b_minus for m in series])
    rem = [remainder_terms(m, sd) for m in series]
    n0 = np.array([r.n0 for r in rem])[1:-1]
    out = {
        "t": times[1:-1],
        "a1": _centered(a1, dt) - nu0 * a2[1:-1],
        "a2": _centered(a2, dt) - nu0 * a1[1:-1] - n0 / nu0,
        "b_plus": _centered(bp, dt) - nu0 * bp[1:-1] - n0 / (2 * nu0),
        "b_minus": _centered(bm, dt) + nu0 * bm[1:-1] + n0 / (2 * nu0),
    }
    ru1, ru2 = [], []
    for k in range(1, len(series) - 1):
        du1 = (series[k + 1].u1 - series[k - 1].u1) / (2 * dt)
        du2 = (series[k + 1].u2 - series[k - 1].u2) / (2 * dt)
        ru1.append(grid.norm(du1 - series[k].u2))
        r = du2 + sd.L.apply(series[k].u1) - rem[k].n_perp
        r[-1] = 0.0
        ru2.append(grid.norm(r))
    out["u1"] = np.array(ru1)
    out["u2"] = np.array(ru2)
    return out


MODAL_COLUMNS = ("t", "a1", "a2", "b_plus", "b_minus", "u1_h1", "u2_l2", "N0")


def modal_table(series: Sequence[ModalState], sd: SpectralData) -> dict[str, np.ndarray]:
    """Columns of the modal time-series CSV."""
    grid = sd.grid
    return {
        "t": np.array([m.t for m in series]),
        "a1": np.array([m.a1 for m in series]),
        "a2": np.array([m.a2 for m in series]),
        "b_plus": np.array([m.b_plus for m in series]),
        "b_minus": np.array([m.b_minus for m in series]),
        "u1_h1": np.array([grid.h1_norm(m.u1) for m in series]),
        "u2_l2": np.array([grid.norm(m.u2) for m in series]),
        "N0": np.array([remainder_terms(m, sd).n0 for m in series]),
    }
