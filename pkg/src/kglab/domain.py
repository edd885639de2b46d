"""Closed-form profiles, the nonlinearity, energy and the even half-line grid.

All fields are even (or, for intermediate results of first-order operators,
odd) functions on the real line, stored on the half-line ``[0, X_max]``.
Full-line integrals are ``2 x`` the half-line trapezoid with the node at
``x = 0`` counted once, and every field vanishes at ``X_max`` (Dirichlet).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.linalg import solve_banded

from .errors import NonConvergence

log = logging.getLogger(__name__)

EVEN = 1
ODD = -1


@dataclass(frozen=True)
class ModelParams:
    """Nonlinearity exponent and grid extent."""

    alpha: float = 2.0
    domain_half_length: float = 40.0
    n_points: int = 4001

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.domain_half_length > 0:
            raise ValueError("domain_half_length must be positive")
        if int(self.n_points) != self.n_points or self.n_points < 16:
            raise ValueError(f"n_points must be an integer >= 16, got {self.n_points}")
        if self.alpha <= 1:
            log.warning("alpha=%g <= 1: outside the no-internal-mode regime of the stability theorems",
                        self.alpha)

    @property
    def spacing(self) -> float:
        return self.domain_half_length / (self.n_points - 1)

    @property
    def theorem_regime(self) -> bool:
        """True when alpha > 1 (no resonance, no even internal mode)."""
        return self.alpha > 1

    @property
    def nu0(self) -> float:
        return float(np.sqrt(self.alpha * (self.alpha + 2.0)))

    @property
    def lambda0(self) -> float:
        return -self.alpha * (self.alpha + 2.0)

    def with_grid(self, domain_half_length: float | None = None,
                  n_points: int | None = None) -> "ModelParams":
        return ModelParams(self.alpha,
                           self.domain_half_length if domain_half_length is None else domain_half_length,
                           self.n_points if n_points is None else int(n_points))


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform nodes ``x_j = j h`` on ``[0, X_max]``."""

    h: float
    nodes: np.ndarray

    @classmethod
    def from_params(cls, params: ModelParams) -> "Grid":
        nodes = np.linspace(0.0, params.domain_half_length, params.n_points)
        nodes.setflags(write=False)
        return cls(params.spacing, nodes)

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def x_max(self) -> float:
        return float(self.nodes[-1])

    @cached_property
    def weights(self) -> np.ndarray:
        """Full-line trapezoid weights for even integrands."""
        w = np.full(self.n, 2.0 * self.h)
        w[0] = self.h
        w[-1] = self.h
        w.setflags(write=False)
        return w

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        return float(np.dot(self.weights, f * g))

    def norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(self.inner(f, f)))

    def window_weights(self, radius: float) -> np.ndarray:
        """Trapezoid weights for the full-line window ``[-radius, radius]``."""
        m = int(np.floor(radius / self.h + 1e-9))
        m = min(m, self.n - 1)
        w = np.zeros(self.n)
        w[: m + 1] = 2.0 * self.h
        w[0] = self.h
        w[m] = self.h
        return w

    def d1(self, f: np.ndarray, parity: int = EVEN) -> np.ndarray:
        """Centered first derivative; the mirror ghost at 0 follows ``parity``."""
        h = self.h
        out = np.empty_like(f)
        out[1:-1] = (f[2:] - f[:-2]) / (2 * h)
        out[0] = (1 - parity) * f[1] / (2 * h)
        out[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * h)
        return out

    def d2(self, f: np.ndarray, parity: int = EVEN) -> np.ndarray:
        """Centered second derivative with the same boundary conventions as :meth:`d1`."""
        h2 = self.h * self.h
        out = np.empty_like(f)
        out[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / h2
        out[0] = ((1 + parity) * f[1] - 2 * f[0]) / h2
        out[-1] = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / h2
        return out

    def laplacian(self, f: np.ndarray, parity: int = EVEN) -> np.ndarray:
        """Second difference with the last node pinned (Dirichlet): zero there."""
        out = self.d2(f, parity)
        out[-1] = 0.0
        return out

    def h1_norm(self, f: np.ndarray, parity: int = EVEN) -> float:
        df = self.d1(f, parity)
        return float(np.sqrt(self.inner(df, df) + self.inner(f, f)))


@dataclass(frozen=True, eq=False)
class FieldPair:
    """``(phi, d_t phi)`` sampled on one grid."""

    phi1: np.ndarray
    phi2: np.ndarray

    def __post_init__(self) -> None:
        if self.phi1.shape != self.phi2.shape:
            raise ValueError("phi1 and phi2 must live on the same grid")

    def __add__(self, other: "FieldPair") -> "FieldPair":
        return FieldPair(self.phi1 + other.phi1, self.phi2 + other.phi2)

    def __sub__(self, other: "FieldPair") -> "FieldPair":
        return FieldPair(self.phi1 - other.phi1, self.phi2 - other.phi2)

    def scaled(self, s: float) -> "FieldPair":
        return FieldPair(s * self.phi1, s * self.phi2)

    def copy(self) -> "FieldPair":
        return FieldPair(self.phi1.copy(), self.phi2.copy())

    @classmethod
    def zeros(cls, n: int) -> "FieldPair":
        return cls(np.zeros(n), np.zeros(n))


def pair_norm(pair: FieldPair, grid: Grid) -> float:
    """H^1 x L^2 norm over the full line."""
    return float(np.hypot(grid.h1_norm(pair.phi1), grid.norm(pair.phi2)))


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    gradient: float
    mass: float
    potential: float
    total: float


# -- profiles ---------------------------------------------------------------

def soliton_closed_form(x: np.ndarray, alpha: float) -> np.ndarray:
    return (alpha + 1.0) ** (1.0 / (2 * alpha)) / np.cosh(alpha * x) ** (1.0 / alpha)


def soliton_profile(params: ModelParams, grid: Grid) -> np.ndarray:
    """Sample ``Q(x) = (alpha+1)^(1/2alpha) / cosh^(1/alpha)(alpha x)`` on the grid.

    The last node is set to zero so the profile obeys the Dirichlet convention
    (its true value at ``X_max = 40`` is far below machine precision).
    """
    q = soliton_closed_form(grid.nodes, params.alpha)
    q[-1] = 0.0
    return q


def soliton_derivative(params: ModelParams, grid: Grid) -> np.ndarray:
    """Closed form ``Q' = -tanh(alpha x) Q`` (an odd field)."""
    return -np.tanh(params.alpha * grid.nodes) * soliton_profile(params, grid)


def ground_state_closed_form(x: np.ndarray, alpha: float) -> np.ndarray:
    """Unnormalised ``cosh(alpha x)^-(1 + 1/alpha)``."""
    return np.cosh(alpha * x) ** (-(1.0 + 1.0 / alpha))


def soliton_residual(q: np.ndarray, params: ModelParams, grid: Grid) -> np.ndarray:
    """Discrete residual ``Q'' - Q + Q^(2 alpha + 1)`` (zero at the pinned node)."""
    r = grid.laplacian(q) - q + nonlinearity(q, params.alpha)
    r[-1] = 0.0
    return r


@lru_cache(maxsize=16)
def _discrete_soliton_cached(alpha: float, x_max: float, n: int, tol: float) -> np.ndarray:
    params = ModelParams(alpha, x_max, n)
    grid = Grid.from_params(params)
    q = soliton_profile(params, grid)
    h2 = grid.h ** 2
    m = n - 1
    for _ in range(30):
        r = soliton_residual(q, params, grid)[:m]
        if np.max(np.abs(r)) < tol:
            break
        # Jacobian = Laplacian - 1 + f'(Q), tridiagonal on the free nodes
        ab = np.zeros((3, m))
        ab[1] = -2.0 / h2 - 1.0 + nonlinearity_prime(q[:m], alpha)
        ab[0, 1:] = 1.0 / h2
        ab[0, 1] = 2.0 / h2
        ab[2, :-1] = 1.0 / h2
        q[:m] -= solve_banded((1, 1), ab, r)
    else:
        raise NonConvergence("Newton iteration for the discrete soliton did not converge")
    q.setflags(write=False)
    return q


def discrete_soliton(params: ModelParams, grid: Grid | None = None, tol: float = 1e-11) -> np.ndarray:
    """Newton-refined soliton: an exact equilibrium of the semi-discrete flow.

    Differs from :func:`soliton_profile` by ``O(h^2)``.
    """
    del grid  # the grid is fully determined by params
    return _discrete_soliton_cached(float(params.alpha), float(params.domain_half_length),
                                    int(params.n_points), float(tol)).copy()


# -- nonlinearity -----------------------------------------------------------

def nonlinearity(phi, alpha: float):
    """``f(phi) = |phi|^(2 alpha) phi``."""
    phi = np.asarray(phi, dtype=float)
    return np.abs(phi) ** (2 * alpha) * phi


def antiderivative(phi, alpha: float):
    """``F(phi) = |phi|^(2 alpha + 2) / (2 alpha + 2)``."""
    phi = np.asarray(phi, dtype=float)
    return np.abs(phi) ** (2 * alpha + 2) / (2 * alpha + 2)


def nonlinearity_prime(phi, alpha: float):
    phi = np.asarray(phi, dtype=float)
    return (2 * alpha + 1) * np.abs(phi) ** (2 * alpha)


def nonlinearity_second(phi, alpha: float):
    phi = np.asarray(phi, dtype=float)
    return (2 * alpha + 1) * (2 * alpha) * np.abs(phi) ** (2 * alpha - 1) * np.sign(phi)


# -- energy -----------------------------------------------------------------

def energy(state: FieldPair, params: ModelParams, grid: Grid,
           gradient: str = "centered") -> EnergyBreakdown:
    """Quadrature of ``1/2 int {phi_t^2 + phi_x^2 + phi^2 - 2 F(phi)}``.

    ``gradient="centered"`` differentiates with centered differences.
    ``gradient="forward"`` uses one-sided differences on each cell, which
    makes the total the exact Hamiltonian of the semi-discrete flow used by
    :mod:`kglab.dynamics` (so it is conserved up to the time-stepping error).
    """
    phi1, phi2 = state.phi1, state.phi2
    kinetic = grid.inner(phi2, phi2)
    mass = grid.inner(phi1, phi1)
    potential = grid.integrate(antiderivative(phi1, params.alpha))
    if gradient == "centered":
        d = grid.d1(phi1)
        grad = grid.inner(d, d)
    elif gradient == "forward":
        diff = np.diff(phi1) / grid.h
        grad = 2.0 * grid.h * float(np.dot(diff, diff))
    else:
        raise ValueError(f"unknown gradient scheme {gradient!r}")
    total = 0.5 * (kinetic + grad + mass - 2.0 * potential)
    return EnergyBreakdown(kinetic, grad, mass, potential, total)


def quadratic_energy_expansion(modal, spectral) -> float:
    """``-4 nu0^2 b+ b- + ||u2||^2 + <L u1, u1>``.

    This is the quadratic part of ``2 {E(phi) - E(Q, 0)}`` in modal
    coordinates. ``spectral`` supplies the grid, ``nu0`` and the operator ``L``.
The cross term is ``nu0^2 (a2^2 - a1^2)`` since ``a2`` carries a ``1/nu0``.
    """
    grid = spectral.grid
    lu = spectral.L.apply(modal.u1)
    return float(-4.0 * spectral.nu0 ** 2 * modal.b_plus * modal.b_minus
                 + grid.inner(modal.u2, modal.u2) + grid.inner(lu, modal.u1))


def even_bump(x: np.ndarray, center: float, width: float) -> np.ndarray:
    """Gaussian bump at ``center`` plus its mirror image (an even function)."""
    return np.exp(-(((x - center) / width) ** 2)) + np.exp(-(((x + center) / width) ** 2))
