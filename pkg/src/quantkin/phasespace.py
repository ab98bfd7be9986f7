"""Complex phase-space distribution Q(x, p) and its moments.

In one dimension::

    Q(x, p) = (2 pi hbar)^(-1/2) psi(x) exp(-i p x / hbar) conj(phi(p))
    f(x, p) = Re Q(x, p)

Arrays are indexed ``[i, j]`` with ``i`` along x and ``j`` along p.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import MomentumGrid, SpatialGrid, spectral_derivative, to_momentum
from .schrodinger import RHO_MIN_FRAC, PolynomialPotential, WaveField

__all__ = [
    "PhaseSpaceField",
    "LocalQField",
    "NegativityReport",
    "build_Q",
    "build_Q_via_q",
    "local_q",
    "distribution_f",
    "negativity",
    "momentum_moment",
    "bilinear_moment",
    "moments",
    "pressure_closed_form",
    "classical_internal_energy",
    "effective_potential_avg",
    "action_form_f",
    "PHI_MASK",
]

PHI_MASK = 1e-12


@dataclass(frozen=True)
class PhaseSpaceField:
    x_grid: SpatialGrid
    p_grid: MomentumGrid
    values: np.ndarray
    hbar: float = 1.0
    mass: float = 1.0
    t: float = 0.0

    @property
    def dx(self) -> float:
        return self.x_grid.dx

    @property
    def dp(self) -> float:
        return self.p_grid.dp

    @property
    def x(self) -> np.ndarray:
        return self.x_grid.x

    @property
    def p(self) -> np.ndarray:
        return self.p_grid.p

    @property
    def f(self) -> np.ndarray:
        return self.values.real

    @property
    def imag(self) -> np.ndarray:
        return self.values.imag

    def x_marginal(self) -> np.ndarray:
        """``sum_j Q[i, j] dp``; equals rho(x_i)."""
        return self.values.sum(axis=1) * self.dp

    def p_marginal(self) -> np.ndarray:
        """``sum_i Q[i, j] dx``; equals |phi(p_j)|^2."""
        return self.values.sum(axis=0) * self.dx

    def total(self) -> complex:
        return complex(self.values.sum() * self.dx * self.dp)


@dataclass(frozen=True)
class LocalQField:
    """``q(x, p) = (2 pi hbar)^(-1/2) psi(x) exp(-i p x / hbar)``."""

    x_grid: SpatialGrid
    p_grid: MomentumGrid
    values: np.ndarray
    hbar: float = 1.0


def _plane_waves(xg: SpatialGrid, pg: MomentumGrid) -> np.ndarray:
    return np.exp(-1j * np.outer(xg.x, pg.p) / pg.hbar)


def local_q(psi: WaveField) -> LocalQField:
    pg = psi.pgrid
    values = psi.values[:, None] * _plane_waves(psi.grid, pg) / np.sqrt(2.0 * np.pi * psi.hbar)
    return LocalQField(psi.grid, pg, values, psi.hbar)


def build_Q(psi: WaveField) -> PhaseSpaceField:
    """Q from psi and its momentum amplitude (FFT route)."""
    pg = psi.pgrid
    phi = to_momentum(psi.values, psi.grid, pg)
    values = (
        psi.values[:, None] * _plane_waves(psi.grid, pg) * np.conj(phi)[None, :]
        / np.sqrt(2.0 * np.pi * psi.hbar)
    )
    return PhaseSpaceField(psi.grid, pg, values, psi.hbar, psi.mass, psi.t)


def build_Q_via_q(psi: WaveField) -> PhaseSpaceField:
    """Q = q(x, p) * sum_x' conj(q(x', p)) dx' by direct summation."""
    q = local_q(psi)
    column = np.conj(q.values).sum(axis=0) * psi.grid.dx
    return PhaseSpaceField(psi.grid, q.p_grid, q.values * column[None, :], psi.hbar, psi.mass, psi.t)


def distribution_f(Q: PhaseSpaceField) -> np.ndarray:
    return Q.values.real.copy()


@dataclass(frozen=True)
class NegativityReport:
    min_value: float
    negative_mass_fraction: float
    negative_cell_fraction: float


def negativity(Q: PhaseSpaceField) -> NegativityReport:
    """Where and how much ``f`` dips below zero.

    ``negative_mass_fraction`` is ``sum_{f<0} |f| / sum |f|``.
    """
    f = Q.values.real
    neg = f < 0
    absolute = np.abs(f).sum()
    return NegativityReport(
        float(f.min()),
        float(np.abs(f[neg]).sum() / absolute) if absolute > 0 else 0.0,
        float(neg.mean()),
    )


# -- moments -------------------------------------------------------------------


def momentum_moment(Q: PhaseSpaceField, n: int) -> np.ndarray:
    """``sum_j Q[i, j] p_j**n dp`` (complex)."""
    return (Q.values * Q.p[None, :] ** n).sum(axis=1) * Q.dp


def bilinear_moment(psi: WaveField, n: int) -> np.ndarray:
    """``(i hbar)^n psi d^n_x conj(psi)`` by spectral differentiation."""
    conj = np.conj(psi.values)
    if n == 0:
        return psi.values * conj
    return (1j * psi.hbar) ** n * psi.values * spectral_derivative(conj, psi.grid.dx, n)


def _rho_mask(rho: np.ndarray, rho_min_frac: float) -> np.ndarray:
    return rho >= rho_min_frac * np.max(rho)


def moments(Q: PhaseSpaceField, rho_min_frac: float = RHO_MIN_FRAC):
    """Velocity ``u``, kinetic energy ``k`` and pressure ``P`` from f.

    ``u`` and ``k`` are NaN where the density marginal is below
    ``rho_min_frac * max``.  ``P`` carries no 1/rho and is never masked.
    """
    f = Q.values.real
    p, dp, m = Q.p[None, :], Q.dp, Q.mass
    rho = f.sum(axis=1) * dp
    mask = _rho_mask(rho, rho_min_frac)
    u = np.full(rho.shape, np.nan)
    k = np.full(rho.shape, np.nan)
    u[mask] = (f[mask] * p / m).sum(axis=1) * dp / rho[mask]
    k[mask] = (f[mask] * p**2 / (2.0 * m)).sum(axis=1) * dp / rho[mask]
    pressure = (f * p**2).sum(axis=1) * dp
    return u, k, pressure


def pressure_closed_form(psi: WaveField) -> np.ndarray:
    """``rho (hbar phase')^2 - hbar^2 sqrt(rho) d_x(rho^(-1/2) rho' / 2)``.

    Written with bilinear forms so nothing is divided by a vanishing density
    except the bounded ratios ``j^2/rho`` and ``rho'^2/rho``.
    """
    hbar, dx = psi.hbar, psi.grid.dx
    values = psi.values
    rho = np.abs(values) ** 2
    dpsi = spectral_derivative(values, dx, 1)
    d2psi = spectral_derivative(values, dx, 2)
    cross = np.conj(values) * dpsi
    mom = hbar * cross.imag  # rho * hbar * phase'
    half_drho = cross.real
    d2rho = 2.0 * np.real(np.conj(values) * d2psi) + 2.0 * np.abs(dpsi) ** 2
    safe = rho > 0
    j2 = np.zeros_like(rho)
    g2 = np.zeros_like(rho)
    # both ratios are bounded by |psi'|^2 pointwise
    j2[safe] = mom[safe] ** 2 / rho[safe]
    g2[safe] = 4.0 * half_drho[safe] ** 2 / rho[safe]
    return j2 - hbar**2 * (0.5 * d2rho - 0.25 * g2)


def classical_internal_energy(Q: PhaseSpaceField, rho_min_frac: float = RHO_MIN_FRAC) -> np.ndarray:
    """Second central velocity moment ``(m/2) <(p/m - u)^2>`` of f."""
    f = Q.values.real
    p, dp, m = Q.p[None, :], Q.dp, Q.mass
    rho = f.sum(axis=1) * dp
    mask = _rho_mask(rho, rho_min_frac)
    out = np.full(rho.shape, np.nan)
    fm = f[mask]
    u = (fm * p / m).sum(axis=1) * dp / rho[mask]
    out[mask] = 0.5 * m * (fm * (p / m - u[:, None]) ** 2).sum(axis=1) * dp / rho[mask]
    return out


def effective_potential_avg(
    Q: PhaseSpaceField, potential: PolynomialPotential, mask_level: float = PHI_MASK
) -> tuple[np.ndarray, np.ndarray]:
    """Momentum-dependent average ``<V>(p) = sum V(x') conj(Q(x', p)) dx' / |phi(p)|^2``.

    Returns ``(avg, mask)``; ``avg`` is NaN where ``|phi|^2 < mask_level``.
    """
    phi2 = Q.p_marginal().real
    mask = phi2 >= mask_level
    v = potential(Q.x)
    weighted = (v[:, None] * np.conj(Q.values)).sum(axis=0) * Q.dx
    avg = np.full(phi2.shape, np.nan, dtype=complex)
    avg[mask] = weighted[mask] / phi2[mask]
    return avg, mask


def action_form_f(psi: WaveField, include_prefactor: bool = True) -> np.ndarray:
    """f from the two-point amplitude ``sqrt(rho rho') exp(i S / hbar)``.

    ``S = hbar (phase(x) - phase(x')) - p (x - x')``; the amplitude-phase
    product is taken as ``psi(x) conj(psi(x'))`` so no phase is unwrapped.
    With ``include_prefactor`` the result is divided by ``2 pi hbar`` and
    equals ``Re Q``.
    """
    xg, hbar, dx = psi.grid, psi.hbar, psi.grid.dx
    pg = psi.pgrid
    x, p = xg.x, pg.p
    kernel = np.outer(psi.values, np.conj(psi.values))  # [x, x']
    # exp(-i p (x - x') / hbar) = exp(-i p x / hbar) * exp(+i p x' / hbar)
    summed = kernel @ np.exp(1j * np.outer(x, p) / hbar) * dx
    fs = np.real(summed * np.exp(-1j * np.outer(x, p) / hbar))
    if include_prefactor:
        fs = fs / (2.0 * np.pi * hbar)
    return fs
