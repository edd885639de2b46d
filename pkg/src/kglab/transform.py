"""Cutoffs, exponential weights, the smoothing inverse and transformed variables.

The cutoff ``chi`` equals 1 on ``[-1, 1]``, vanishes outside ``[-2, 2]`` and
is glued in between by the smooth step ``sigma(t) = 1 / (1 + exp(1/t - 1/(1-t)))``,
``t = |x| - 1``, whose derivatives are available in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import solve_banded
from scipy.special import expit

from .decomposition import reconstruct
from .domain import EVEN, ODD, Grid
from .errors import ScaleOrderViolation
from .spectral import composite_su


def _smooth_step(t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``sigma``, ``sigma'`` and ``sigma''`` for ``t`` in the open interval (0, 1)."""
    q = 1.0 / t - 1.0 / (1.0 - t)
    dq = -1.0 / t ** 2 - 1.0 / (1.0 - t) ** 2
    ddq = 2.0 / t ** 3 - 2.0 / (1.0 - t) ** 3
    s = expit(-q)
    sc = expit(q)  # 1 - s without cancellation
    ds = -s * sc * dq
    dds = -(ds * (sc - s) * dq + s * sc * ddq)
    return s, ds, dds


def chi(x: np.ndarray, derivative: int = 0) -> np.ndarray:
    """Even cutoff and its first two derivatives (``derivative`` in 0, 1, 2)."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    mid = (ax > 1.0) & (ax < 2.0)
    s, ds, dds = _smooth_step(ax[mid] - 1.0)
    if derivative == 0:
        out = (ax <= 1.0).astype(float)
        out[mid] = 1.0 - s
    elif derivative == 1:
        out = np.zeros_like(ax)
        out[mid] = -ds * np.sign(x[mid])
    elif derivative == 2:
        out = np.zeros_like(ax)
        out[mid] = -dds
    else:
        raise ValueError("derivative must be 0, 1 or 2")
    return out


def rho(x: np.ndarray) -> np.ndarray:
    return 1.0 / np.cosh(np.asarray(x) / 10.0)


@dataclass(frozen=True, eq=False)
class WeightFamily:
    """Weights at scales ``A`` and ``B`` plus the smoothing parameter ``gamma``."""

    scale_A: float
    scale_B: float
    gamma: float
    grid: Grid

    @cached_property
    def chi(self) -> np.ndarray:
        return chi(self.grid.nodes)

    @cached_property
    def rho(self) -> np.ndarray:
        return rho(self.grid.nodes)

    def zeta(self, scale: float) -> np.ndarray:
        x = self.grid.nodes
        return np.exp(-(1.0 - self.chi) * x / scale)

    def phi(self, scale: float) -> np.ndarray:
        """Odd primitive of ``zeta^2`` vanishing at 0 (cumulative trapezoid)."""
        return cumulative_trapezoid(self.zeta(scale) ** 2, self.grid.nodes, initial=0.0)

    def log_zeta_second(self, scale: float) -> np.ndarray:
        """Closed form of ``zeta''/zeta - (zeta'/zeta)^2 = (chi''|x| + 2 chi' sgn x) / scale``."""
        x = self.grid.nodes
        return (chi(x, 2) * x + 2.0 * chi(x, 1)) / scale

    @cached_property
    def zeta_A(self) -> np.ndarray:
        return self.zeta(self.scale_A)

    @cached_property
    def phi_A(self) -> np.ndarray:
        return self.phi(self.scale_A)

    @cached_property
    def zeta_B(self) -> np.ndarray:
        return self.zeta(self.scale_B)

    @cached_property
    def phi_B(self) -> np.ndarray:
        return self.phi(self.scale_B)

    @cached_property
    def chi_B(self) -> np.ndarray:
        return chi(self.grid.nodes / self.scale_B ** 2)

    @cached_property
    def psi_B(self) -> np.ndarray:
        return self.chi_B ** 2 * self.phi_B

    @cached_property
    def dpsi_B(self) -> np.ndarray:
        """``psi_B' = 2 chi_B chi_B' phi_B + chi_B^2 zeta_B^2`` in closed form."""
        x = self.grid.nodes
        b2 = self.scale_B ** 2
        dchi_b = chi(x / b2, 1) / b2
        return 2.0 * self.chi_B * dchi_b * self.phi_B + self.chi_B ** 2 * self.zeta_B ** 2

    def profiles(self) -> dict[str, np.ndarray]:
        """All weight profiles, for CSV dumps."""
        return {"x": self.grid.nodes, "chi": self.chi, "rho": self.rho,
                "zeta_A": self.zeta_A, "phi_A": self.phi_A, "zeta_B": self.zeta_B,
                "phi_B": self.phi_B, "chi_B": self.chi_B, "psi_B": self.psi_B}


def make_weights(A: float, B: float, gamma: float, grid: Grid) -> WeightFamily:
    if B < 2:
        raise ScaleOrderViolation(f"B must be >= 2, got {B}")
    if A < B ** 2:
        raise ScaleOrderViolation(f"A={A} must be >= B^2={B ** 2}")
    if not 0 < gamma <= 0.5:
        raise ValueError(f"gamma must lie in (0, 1/2], got {gamma}")
    return WeightFamily(float(A), float(B), float(gamma), grid)


def scales_from_delta(delta: float) -> tuple[float, float]:
    """``A = 1/delta`` and ``B = delta^(-1/4)``."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return 1.0 / delta, delta ** -0.25


def weights_from_delta(delta: float, gamma: float, grid: Grid) -> WeightFamily:
    A, B = scales_from_delta(delta)
    return make_weights(A, B, gamma, grid)


def smoothing_inverse(f: np.ndarray, gamma: float, grid: Grid, parity: int = EVEN) -> np.ndarray:
    """Solve ``(1 - gamma d^2/dx^2) g = f`` (mirror at 0, Dirichlet at ``X_max``)."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    c = gamma / grid.h ** 2
    g = np.zeros_like(f, dtype=float)
    if parity == EVEN:
        rhs = f[:-1]
        m = rhs.size
        ab = np.empty((3, m))
        ab[0] = -c
        ab[0, 1] = -2.0 * c
        ab[1] = 1.0 + 2.0 * c
        ab[2] = -c
        g[:-1] = solve_banded((1, 1), ab, rhs)
    elif parity == ODD:
        rhs = f[1:-1]
        m = rhs.size
        ab = np.empty((3, m))
        ab[0] = -c
        ab[1] = 1.0 + 2.0 * c
        ab[2] = -c
        g[1:-1] = solve_banded((1, 1), ab, rhs)
    else:
        raise ValueError("parity must be +1 or -1")
    return g


def smoothing_forward(g: np.ndarray, gamma: float, grid: Grid, parity: int = EVEN) -> np.ndarray:
    """``(1 - gamma d^2/dx^2) g`` with the same boundary pair as :func:`smoothing_inverse`."""
    out = g - gamma * grid.d2(g, parity)
    out[-1] = 0.0
    if parity == ODD:
        out[0] = 0.0
    return out


@dataclass(frozen=True, eq=False)
class TransformedState:
    w: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    z: np.ndarray


def transformed_state(modal, weights: WeightFamily, sd) -> TransformedState:
    """``w = zeta_A u1``, ``v_i = (1 - gamma d^2)^-1 SU(chi_B u_i)``, ``z = chi_B zeta_B v1``."""
    grid, params = sd.grid, sd.params
    w = weights.zeta_A * modal.u1
    v1 = smoothing_inverse(composite_su(weights.chi_B * modal.u1, params, grid), weights.gamma, grid)
    v2 = smoothing_inverse(composite_su(weights.chi_B * modal.u2, params, grid), weights.gamma, grid)
    z = weights.chi_B * weights.zeta_B * v1
    return TransformedState(w, v1, v2, z)


def local_norm(f: np.ndarray, grid: Grid) -> float:
    """``(int f'^2 + rho f^2)^(1/2)`` over the full line."""
    df = grid.d1(f)
    return float(np.sqrt(grid.inner(df, df) + grid.inner(rho(grid.nodes) * f, f)))


def local_distance(pair, grid: Grid, radius: float = 5.0) -> float:
    """``H^1 x L^2`` size of ``pair`` restricted to ``[-radius, radius]``."""
    w = grid.window_weights(radius)
    d = grid.d1(pair.phi1)
    return float(np.sqrt(np.dot(w, d * d + pair.phi1 ** 2 + pair.phi2 ** 2)))


def loc_pair_norm(modal, sd, radius: float = 5.0) -> float:
    """Local distance of the modal state to ``(Q, 0)`` on ``[-radius, radius]``."""
    return local_distance(reconstruct(modal, sd, perturbation=True), sd.grid, radius)
