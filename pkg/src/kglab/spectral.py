"""Discrete Schrodinger operators, their even spectrum and the first-order factors.

The operators ``L``, ``L_-`` and ``L_0`` are realised as three-point
stencils on the half-line grid. In the even sector the node ``x = 0`` is a
mirror node, whose row ``2 (f_1 - f_0) / h^2`` makes the matrix
non-symmetric; the similarity ``D^(1/2) A D^(-1/2)`` with ``D = diag(1, 2, 2, ...)``
restores symmetry and coincides with the quadrature inner product.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from .domain import (EVEN, ODD, FieldPair, Grid, ModelParams, discrete_soliton,
                     ground_state_closed_form, soliton_closed_form)
from .errors import NonConvergence

log = logging.getLogger(__name__)

KINDS = ("L", "Lminus", "Lzero")


def _q_power(x: np.ndarray, alpha: float) -> np.ndarray:
    """Closed-form ``Q^(2 alpha) = (alpha + 1) sech^2(alpha x)``."""
    return (alpha + 1.0) / np.cosh(alpha * x) ** 2


def potential_from_profile(kind: str, q_power: np.ndarray, alpha: float) -> np.ndarray:
    if kind == "L":
        return 1.0 - (2 * alpha + 1) * q_power
    if kind == "Lminus":
        return 1.0 - q_power
    if kind == "Lzero":
        return 1.0 + (alpha - 1) / (alpha + 1) * q_power
    raise ValueError(f"unknown operator kind {kind!r}; expected one of {KINDS}")


@dataclass(frozen=True, eq=False)
class SchrodingerOperator:
    """``-d^2/dx^2 + potential`` on the grid, Dirichlet at ``X_max``."""

    kind: str
    potential: np.ndarray
    grid: Grid

    def apply(self, f: np.ndarray, parity: int = EVEN) -> np.ndarray:
        out = -self.grid.d2(f, parity) + self.potential * f
        out[-1] = 0.0
        return out

    def rayleigh(self, f: np.ndarray) -> float:
        return self.grid.inner(self.apply(f), f) / self.grid.inner(f, f)

    def tridiagonal(self, parity: int = EVEN) -> tuple[np.ndarray, np.ndarray]:
        """Symmetric tridiagonal ``(diag, offdiag)`` on the free nodes.

        Even sector: nodes ``0..n-2``. Odd sector: nodes ``1..n-2``.
        """
        h2 = self.grid.h ** 2
        if parity == EVEN:
            d = 2.0 / h2 + self.potential[:-1]
            e = np.full(d.size - 1, -1.0 / h2)
            e[0] = -np.sqrt(2.0) / h2
        elif parity == ODD:
            d = 2.0 / h2 + self.potential[1:-1]
            e = np.full(d.size - 1, -1.0 / h2)
        else:
            raise ValueError("parity must be +1 or -1")
        return d, e

    def dense(self, parity: int = EVEN) -> np.ndarray:
        """Dense symmetric matrix; only meant for small grids and tests."""
        d, e = self.tridiagonal(parity)
        return np.diag(d) + np.diag(e, 1) + np.diag(e, -1)

    def to_field(self, psi: np.ndarray, parity: int = EVEN) -> np.ndarray:
        """Map symmetric-frame coordinates back to nodal values."""
        out = np.zeros(self.grid.n)
        if parity == EVEN:
            out[0] = psi[0]
            out[1:-1] = psi[1:] / np.sqrt(2.0)
        else:
            out[1:-1] = psi / np.sqrt(2.0)
        return out

    def from_field(self, f: np.ndarray, parity: int = EVEN) -> np.ndarray:
        if parity == EVEN:
            psi = f[:-1].copy()
            psi[1:] *= np.sqrt(2.0)
            return psi
        return f[1:-1] * np.sqrt(2.0)


def build_operator(kind: str, params: ModelParams, grid: Grid,
                   profile: np.ndarray | None = None) -> SchrodingerOperator:
    """Build ``L``, ``L_-`` or ``L_0``.

    With ``profile=None`` the closed-form soliton is used; otherwise the
    potential is formed from ``profile ** (2 alpha)`` (e.g. the discrete soliton).
    """
    alpha = params.alpha
    if profile is None:
        qp = _q_power(grid.nodes, alpha)
    else:
        qp = np.abs(profile) ** (2 * alpha)
    pot = potential_from_profile(kind, qp, alpha)
    pot.setflags(write=False)
    return SchrodingerOperator(kind, pot, grid)


# -- Sturm sequences and inverse iteration -----------------------------------

@numba.njit(cache=True, nogil=True)
def sturm_count(d, e, x):
    """Number of eigenvalues of the symmetric tridiagonal ``(d, e)`` below ``x``."""
    count = 0
    q = d[0] - x
    if q < 0.0:
        count += 1
    for i in range(1, d.size):
        if q == 0.0:
            q = 1e-300
        q = d[i] - x - e[i - 1] * e[i - 1] / q
        if q < 0.0:
            count += 1
    return count


@numba.njit(cache=True, nogil=True)
def _bisect_eigenvalue(d, e, k, lo, hi, tol):
    """The ``k``-th (0-based) eigenvalue in ``[lo, hi]`` by bisection."""
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
        if sturm_count(d, e, mid) > k:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def gershgorin_bounds(d: np.ndarray, e: np.ndarray) -> tuple[float, float]:
    r = np.zeros_like(d)
    r[:-1] += np.abs(e)
    r[1:] += np.abs(e)
    return float(np.min(d - r)), float(np.max(d + r))


def _inverse_iteration(d: np.ndarray, e: np.ndarray, lam: float,
                       tol: float, max_restarts: int = 4) -> np.ndarray:
    m = d.size
    rng = np.random.default_rng(12345)
    scale = max(1.0, abs(lam))
    for attempt in range(max_restarts):
        shift = lam + (attempt + 1) * 1e-13 * scale * (1 if attempt % 2 == 0 else -1)
        ab = np.zeros((3, m))
        ab[0, 1:] = e
        ab[1] = d - shift
        ab[2, :-1] = e
        v = np.ones(m) + 0.1 * rng.standard_normal(m)
        v /= np.linalg.norm(v)
        try:
            for _ in range(3):
                v = solve_banded((1, 1), ab, v)
                v /= np.linalg.norm(v)
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(v)):
            continue
        tv = d * v
        tv[:-1] += e * v[1:]
        tv[1:] += e * v[:-1]
        if np.linalg.norm(tv - lam * v) <= tol * scale:
            return v
    raise NonConvergence(f"inverse iteration failed near eigenvalue {lam:.6g}")


@dataclass(frozen=True, eq=False)
class EigenPair:
    """Eigenvalue and quadrature-normalised eigenfunction (positive first entry)."""

    eigenvalue: float
    eigenfunction: np.ndarray
    residual: float
    parity: int = EVEN


def _sign_fix(f: np.ndarray) -> np.ndarray:
    big = np.abs(f) > 1e-12 * np.max(np.abs(f))
    first = int(np.argmax(big))
    return f if f[first] > 0 else -f


def spectrum(op: SchrodingerOperator, k: int, parity: int = EVEN,
             tol: float = 1e-8) -> list[EigenPair]:
    """The ``k`` lowest eigenpairs in the given parity sector."""
    if k < 1:
        raise ValueError("k must be >= 1")
    d, e = op.tridiagonal(parity)
    lo, hi = gershgorin_bounds(d, e)
    k = min(k, d.size)
    out = []
    for j in range(k):
        lam = _bisect_eigenvalue(d, e, j, lo, hi, 4e-16)
        psi = _inverse_iteration(d, e, lam, tol)
        f = _sign_fix(op.to_field(psi, parity))
        f /= op.grid.norm(f)
        r = op.apply(f, parity) - lam * f
        r[-1] = 0.0
        if parity == ODD:
            r[0] = 0.0
        out.append(EigenPair(float(lam), f, op.grid.norm(r), parity))
    return out


def even_spectrum(op: SchrodingerOperator, k: int, tol: float = 1e-8) -> list[EigenPair]:
    """The ``k`` lowest even eigenpairs."""
    return spectrum(op, k, EVEN, tol)


def count_eigenvalues(op: SchrodingerOperator, lo: float, hi: float, parity: int = EVEN) -> int:
    """Number of eigenvalues in ``[lo, hi)`` by Sturm counting."""
    d, e = op.tridiagonal(parity)
    return int(sturm_count(d, e, hi) - sturm_count(d, e, lo))


def refined(params: ModelParams) -> ModelParams:
    """Same domain with the spacing halved."""
    return params.with_grid(n_points=2 * (params.n_points - 1) + 1)


def richardson_eigenvalues(kind: str, params: ModelParams, k: int,
                           parity: int = EVEN) -> dict:
    """Lowest ``k`` eigenvalues at ``h`` and ``h/2`` and their order-2 extrapolation."""
    vals = []
    for p in (params, refined(params)):
        g = Grid.from_params(p)
        op = build_operator(kind, p, g)
        d, e = op.tridiagonal(parity)
        lo, hi = gershgorin_bounds(d, e)
        vals.append(np.array([_bisect_eigenvalue(d, e, j, lo, hi, 4e-16) for j in range(k)]))
    coarse, fine = vals
    return {"coarse": coarse, "fine": fine, "extrapolated": (4.0 * fine - coarse) / 3.0}


# -- first-order factors ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class FirstOrderFactor:
    """``W d/dx W^-1`` (forward) or its adjoint ``-W^-1 d/dx W``.

    ``log_derivative`` is the closed-form ``W'/W``.
    """

    name: str
    weight: np.ndarray
    log_derivative: np.ndarray
    direction: str = "forward"

    def __post_init__(self) -> None:
        if self.direction not in ("forward", "adjoint"):
            raise ValueError("direction must be 'forward' or 'adjoint'")
        if np.any(self.weight[:-1] <= 0):
            raise ValueError("factor weight must be positive on the grid interior")

    @property
    def adjoint(self) -> "FirstOrderFactor":
        flip = "adjoint" if self.direction == "forward" else "forward"
        return FirstOrderFactor(self.name, self.weight, self.log_derivative, flip)


def factor_u(params: ModelParams, grid: Grid, direction: str = "forward") -> FirstOrderFactor:
    a = params.alpha
    return FirstOrderFactor("U", ground_state_closed_form(grid.nodes, a),
                            -(a + 1) * np.tanh(a * grid.nodes), direction)


def factor_s(params: ModelParams, grid: Grid, direction: str = "forward") -> FirstOrderFactor:
    a = params.alpha
    return FirstOrderFactor("S", soliton_closed_form(grid.nodes, a),
                            -np.tanh(a * grid.nodes), direction)


def apply_factor(factor: FirstOrderFactor, f: np.ndarray, grid: Grid,
                 parity: int = EVEN) -> np.ndarray:
    """Apply ``f -> f' - (W'/W) f`` (forward) or ``-f' - (W'/W) f`` (adjoint).

    The result has the opposite parity of ``f``.
    """
    df = grid.d1(f, parity)
    if factor.direction == "forward":
        return df - factor.log_derivative * f
    return -df - factor.log_derivative * f


def composite_su(f: np.ndarray, params: ModelParams, grid: Grid, parity: int = EVEN) -> np.ndarray:
    """Closed-form second-order expression for ``S U f``."""
    a = params.alpha
    x = grid.nodes
    th = np.tanh(a * x)
    sech2 = 1.0 / np.cosh(a * x) ** 2
    return (grid.d2(f, parity) + (a + 2) * th * grid.d1(f, parity)
            + (a + 1) * (1 + (a - 1) * sech2) * f)


def su_composed(f: np.ndarray, params: ModelParams, grid: Grid, parity: int = EVEN) -> np.ndarray:
    """``S U f`` as two successive first-order factors."""
    uf = apply_factor(factor_u(params, grid), f, grid, parity)
    return apply_factor(factor_s(params, grid), uf, grid, -parity)


def intertwining_residual(params: ModelParams, grid: Grid, probe: np.ndarray,
                          which: str = "SU") -> float:
    """Relative norm of ``SU L - L_0 SU`` (``which="SU"``) or ``U L - L_- U`` (``"U"``)."""
    L = build_operator("L", params, grid)
    lf = L.apply(probe)
    if which == "U":
        U = factor_u(params, grid)
        lhs = apply_factor(U, lf, grid, EVEN)
        rhs = build_operator("Lminus", params, grid).apply(apply_factor(U, probe, grid, EVEN), ODD)
    elif which == "SU":
        lhs = composite_su(lf, params, grid)
        rhs = build_operator("Lzero", params, grid).apply(composite_su(probe, params, grid))
    else:
        raise ValueError("which must be 'U' or 'SU'")
    r = lhs - rhs
    r[-1] = 0.0
    return grid.norm(r) / grid.norm(probe)


# -- spectral data for the modal decomposition ------------------------------

@dataclass(frozen=True, eq=False)
class ModeVectors:
    y_plus: FieldPair
    y_minus: FieldPair
    z_plus: FieldPair
    z_minus: FieldPair


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Discrete soliton, ``L`` built on it, and its exact discrete ground state.

    ``lambda0`` and ``nu0`` are the discrete values, so the modal ODE system
    holds exactly for the semi-discrete flow.
    """

    params: ModelParams
    grid: Grid
    Q: np.ndarray
    L: SchrodingerOperator
    Y0: np.ndarray
    lambda0: float
    nu0: float
    modes: ModeVectors = field(repr=False)

    @property
    def alpha(self) -> float:
        return self.params.alpha


def mode_vectors(y0: np.ndarray, nu0: float) -> ModeVectors:
    return ModeVectors(FieldPair(y0, nu0 * y0), FieldPair(y0, -nu0 * y0),
                       FieldPair(y0, y0 / nu0), FieldPair(y0, -y0 / nu0))


@lru_cache(maxsize=8)
def _spectral_data_cached(alpha: float, x_max: float, n: int) -> SpectralData:
    params = ModelParams(alpha, x_max, n)
    grid = Grid.from_params(params)
    q = discrete_soliton(params)
    L = build_operator("L", params, grid, profile=q)
    (ground,) = even_spectrum(L, 1)
    y0 = ground.eigenfunction
    y0.setflags(write=False)
    q.setflags(write=False)
    nu0 = float(np.sqrt(-ground.eigenvalue))
    return SpectralData(params, grid, q, L, y0, ground.eigenvalue, nu0, mode_vectors(y0, nu0))


def spectral_data(params: ModelParams) -> SpectralData:
    """Cached :class:`SpectralData` for ``params``."""
    if params.alpha <= 0:
        raise ValueError("alpha must be positive")
    return _spectral_data_cached(float(params.alpha), float(params.domain_half_length),
                                 int(params.n_points))


# -- coercivity ---------------------------------------------------------------

def _h1_operator(grid: Grid) -> SchrodingerOperator:
    pot = np.ones(grid.n)
    return SchrodingerOperator("H1", pot, grid)


def coercivity_constant(op: SchrodingerOperator, y0: np.ndarray, xtol: float = 1e-12) -> float:
    """Smallest ``<A u, u> / ||u||_{H^1}^2`` over even ``u`` with ``<u, y0> = 0``.

    The constrained minimum is the smallest root of the secular function
    ``g(mu) = y^T (A - mu B)^-1 y`` between the two lowest eigenvalues of the
    pencil ``(A, B)``, ``B = -d^2 + 1``. Pencil eigenvalues come from the
    inertia of ``A - mu B`` (Sturm counting); ``g`` is evaluated with banded solves.
    """
    da, ea = op.tridiagonal(EVEN)
    db, eb = _h1_operator(op.grid).tridiagonal(EVEN)
    y = op.from_field(y0, EVEN)

    def count(mu: float) -> int:
        return int(sturm_count(da - mu * db, ea - mu * eb, mu * 0.0))

    def kth(k: int) -> float:
        lo, hi = -1.0, 1.0
        while count(lo) > k:
            lo *= 2.0
        while count(hi) <= k:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if count(mid) > k:
                hi = mid
            else:
                lo = mid
            if hi - lo < 1e-15 * max(1.0, abs(mid)):
                break
        return 0.5 * (lo + hi)

    mu1, mu2 = kth(0), kth(1)

    def secular(mu: float) -> float:
        ab = np.zeros((3, da.size))
        ab[0, 1:] = ea - mu * eb
        ab[1] = da - mu * db
        ab[2, :-1] = ea - mu * eb
        return float(y @ solve_banded((1, 1), ab, y))

    gap = mu2 - mu1
    lo, hi = mu1 + 1e-9 * gap, mu2 - 1e-9 * gap
    if secular(lo) > 0 or secular(hi) < 0:
        # y0 is (numerically) an eigenvector of the pencil or orthogonal to the
        # second one; the constrained minimum then sits at mu2
        return float(mu2)
    return float(brentq(secular, lo, hi, xtol=xtol * max(1.0, abs(mu2)), rtol=1e-14))
