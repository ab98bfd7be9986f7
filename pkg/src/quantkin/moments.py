"""Conservation-law residuals of the hydrodynamic moments and the classical
moment quadratures used to cross-check them.

Local residuals are written in bilinear forms of psi.  The only divisions
are by rho in ratios that stay bounded by ``|psi'|^2`` (``j^2/rho`` and
``rho'^2/rho``), so no density mask is needed for them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grids import MomentumGrid, SpatialGrid, spectral_derivative, time_derivative
from .kinetics import ResidualReport, _norms, _uniform_dt
from .schrodinger import RHO_MIN_FRAC, PolynomialPotential, WaveField, bilinear_current

__all__ = [
    "MomentTrace",
    "ClassicalMoments",
    "continuity_residual",
    "momentum_residual",
    "energy_residual",
    "verify_identity_B13",
    "pressure_identity_sides",
    "classical_moments",
    "kinetic_energy_density",
    "bohm_force_density",
    "pressure_balance_gap",
    "moment_trace",
]


def _frames(snapshots: Sequence[WaveField]):
    dt = _uniform_dt([s.t for s in snapshots], None)
    return dt, np.array([s.values for s in snapshots])


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out


def _derivs(psi: WaveField):
    dx = psi.grid.dx
    return (
        spectral_derivative(psi.values, dx, 1),
        spectral_derivative(psi.values, dx, 2),
    )


def kinetic_energy_density(psi: WaveField) -> np.ndarray:
    """``Re[-(hbar^2/2m) psi d_x^2 psi*] = rho (eps + m u^2 / 2)``."""
    d2c = spectral_derivative(np.conj(psi.values), psi.grid.dx, 2)
    return np.real(-(psi.hbar**2) / (2.0 * psi.mass) * psi.values * d2c)


def bohm_force_density(psi: WaveField) -> np.ndarray:
    """``rho d_x eps`` for the Bohm internal energy, in conservative form::

        rho d_x eps = -(hbar^2/4m) d_x [rho'' - rho'^2/rho]
    """
    hbar, m, dx = psi.hbar, psi.mass, psi.grid.dx
    values = psi.values
    d1, d2 = _derivs(psi)
    cross = np.conj(values) * d1
    drho = 2.0 * cross.real
    d2rho = 2.0 * np.real(np.conj(values) * d2) + 2.0 * np.abs(d1) ** 2
    g2 = _safe_ratio(drho**2, np.abs(values) ** 2)
    return -(hbar**2) / (4.0 * m) * spectral_derivative(d2rho - g2, dx, 1)


def _momentum_flux(psi: WaveField) -> np.ndarray:
    """``m rho u^2 = m j^2 / rho``."""
    j = bilinear_current(psi)
    return psi.mass * _safe_ratio(j**2, np.abs(psi.values) ** 2)


# -- conservation residuals ---------------------------------------------------------


def continuity_residual(snapshots: Sequence[WaveField]) -> ResidualReport:
    """``d_t rho + d_x (rho u)`` on the interior snapshots."""
    dt, frames = _frames(snapshots)
    dx = snapshots[0].grid.dx
    rho = np.abs(frames) ** 2
    drho = time_derivative(rho, dt)[1:-1]
    div = np.array([spectral_derivative(bilinear_current(s), dx, 1) for s in snapshots[1:-1]])
    res = drho + div
    l2, linf = _norms(res, dx)
    mass = rho.sum(axis=1) * dx
    return ResidualReport(
        "continuity",
        snapshots[0].grid.n,
        dx,
        None,
        dt,
        l2,
        linf,
        field=res,
        details={"mass_drift": float(np.max(np.abs(mass - mass[0]))),
                 "global_rate": float(np.max(np.abs(np.diff(mass)) / dt))},
    )


def momentum_residual(
    snapshots: Sequence[WaveField],
    potential: PolynomialPotential,
    eps_variant: str = "bohm",
) -> ResidualReport:
    """``d_t(m rho u) + d_x(m rho u^2) - rho F + rho d_x eps``.

    ``eps_variant="paper"`` selects the doubled internal energy (no 1/2 inside
    the density-curvature expression), twice the Bohm value; it does not
    balance and serves as a negative control.
    """
    if eps_variant not in ("bohm", "paper"):
        raise ValueError(f"eps_variant must be 'bohm' or 'paper', got {eps_variant!r}")
    dt, frames = _frames(snapshots)
    s0 = snapshots[0]
    dx, m = s0.grid.dx, s0.mass
    scale = 1.0 if eps_variant == "bohm" else 2.0
    mom = m * np.array([bilinear_current(s) for s in snapshots])
    dmom = time_derivative(mom, dt)[1:-1]
    force = potential.force(s0.grid.x)
    res = []
    for k, s in enumerate(snapshots[1:-1]):
        rho = np.abs(s.values) ** 2
        res.append(
            dmom[k]
            + spectral_derivative(_momentum_flux(s), dx, 1)
            - rho * force
            + scale * bohm_force_density(s)
        )
    res = np.array(res)
    l2, linf = _norms(res, dx)
    return ResidualReport("momentum_" + eps_variant, s0.grid.n, dx, None, dt, l2, linf, field=res)


def _printed_energy_flux(psi: WaveField, rho_min_frac: float) -> np.ndarray:
    """``rho u (eps + m u^2/2) + (hbar^2/4m) (1/rho) d_x[rho d_x(rho u)]``.

    1/rho is regularized as ``rho / (rho^2 + delta^2)`` with
    ``delta = rho_min_frac * max rho`` to keep the field smooth.
    """
    hbar, m, dx = psi.hbar, psi.mass, psi.grid.dx
    rho = np.abs(psi.values) ** 2
    delta = rho_min_frac * rho.max()
    inv = rho / (rho**2 + delta**2)
    j = bilinear_current(psi)
    per_particle = kinetic_energy_density(psi) * inv
    inner = spectral_derivative(rho * spectral_derivative(j, dx, 1), dx, 1)
    return j * per_particle + hbar**2 / (4.0 * m) * inv * inner


def _exact_energy_flux(psi: WaveField) -> np.ndarray:
    """Flux closing the local balance of :func:`kinetic_energy_density`::

        J = -(hbar^3/2m^2) Im[psi*'' psi'] - (hbar^2/4m) j''
    """
    hbar, m, dx = psi.hbar, psi.mass, psi.grid.dx
    d1, d2 = _derivs(psi)
    j = bilinear_current(psi)
    return -(hbar**3) / (2.0 * m**2) * np.imag(np.conj(d2) * d1) - hbar**2 / (4.0 * m) * spectral_derivative(j, dx, 2)


def energy_residual(
    snapshots: Sequence[WaveField],
    potential: PolynomialPotential,
    rho_min_frac: float = RHO_MIN_FRAC,
) -> ResidualReport:
    """Energy balance of the kinetic density ``e = rho (eps + m u^2/2)``.

    The headline numbers are the integrated balance
    ``d/dt sum e dx - sum F j dx`` on the interior snapshots; ``l2``/``linf``
    hold its absolute value and ``details['relative']`` the value divided by
    the larger of the power scale ``max |sum F j dx|`` and the kinetic
    energy.  Local residuals with the printed flux (norms on the
    unmasked region) and with the exact bilinear flux are in ``details``.
    """
    dt, frames = _frames(snapshots)
    s0 = snapshots[0]
    dx, x = s0.grid.dx, s0.grid.x
    force = potential.force(x)
    e = np.array([kinetic_energy_density(s) for s in snapshots])
    j = np.array([bilinear_current(s) for s in snapshots])
    de = time_derivative(e, dt)
    kinetic = e.sum(axis=1) * dx
    power = (force[None, :] * j).sum(axis=1) * dx
    balance = (de.sum(axis=1) * dx - power)[1:-1]
    scale = max(float(np.max(np.abs(power))), float(np.max(np.abs(kinetic))))
    relative = float(np.max(np.abs(balance)) / scale)

    local_printed, local_exact, masks = [], [], []
    for k in range(1, len(snapshots) - 1):
        s = snapshots[k]
        rho = np.abs(s.values) ** 2
        masks.append(rho >= rho_min_frac * rho.max())
        src = de[k] - force * j[k]
        local_printed.append(src + spectral_derivative(_printed_energy_flux(s, rho_min_frac), dx, 1))
        local_exact.append(src + spectral_derivative(_exact_energy_flux(s), dx, 1))
    local_printed = np.array(local_printed)
    local_exact = np.array(local_exact)
    printed_l2, printed_linf = _norms(local_printed, dx, np.array(masks))
    exact_l2, exact_linf = _norms(local_exact, dx)
    energy = np.array([kinetic[k] + np.sum(np.abs(frames[k]) ** 2 * potential(x)) * dx for k in range(len(snapshots))])
    return ResidualReport(
        "energy",
        s0.grid.n,
        dx,
        None,
        dt,
        float(np.max(np.abs(balance))),
        float(np.max(np.abs(balance))),
        mask="integrated over x",
        field=balance,
        details={
            "relative": relative,
            "power_scale": scale,
            "energy_drift": float(np.max(np.abs(energy - energy[0])) / abs(energy[0])),
            "printed_flux_l2": printed_l2,
            "printed_flux_linf": printed_linf,
            "exact_flux_l2": exact_l2,
            "exact_flux_linf": exact_linf,
        },
    )


# -- algebraic identity ------------------------------------------------------------


def pressure_identity_sides(rho: np.ndarray, spacing: float, hbar: float = 1.0, mass: float = 1.0):
    """Both sides of the quantum-pressure identity, each evaluated spectrally::

        lhs = -(hbar^2/m) d[sqrt(rho) d(rho^(-1/2) rho' / 2)] + (hbar^2/4m) rho'''
        rhs = -(hbar^2/2m) rho d[(1/(2 rho)) (rho'' - rho'^2/(2 rho))]
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("nonpositive-rho: identity requires rho > 0 everywhere")
    d = lambda g, k=1: spectral_derivative(g, spacing, k)  # noqa: E731
    r1, r2, r3 = d(rho), d(rho, 2), d(rho, 3)
    sq = np.sqrt(rho)
    lhs = -(hbar**2) / mass * d(sq * d(0.5 * r1 / sq)) + hbar**2 / (4.0 * mass) * r3
    rhs = -(hbar**2) / (2.0 * mass) * rho * d((r2 - r1**2 / (2.0 * rho)) / (2.0 * rho))
    return lhs, rhs


def verify_identity_B13(rho: np.ndarray, spacing: float, hbar: float = 1.0, mass: float = 1.0) -> ResidualReport:
    lhs, rhs = pressure_identity_sides(rho, spacing, hbar, mass)
    l2, linf = _norms(lhs - rhs, spacing)
    return ResidualReport("pressure_identity", len(rho), spacing, None, None, l2, linf, field=lhs - rhs,
                          details={"scale": float(np.max(np.abs(lhs)))})


def pressure_balance_gap(psi: WaveField) -> tuple[np.ndarray, np.ndarray]:
    """``d_x(central pressure) - rho d_x eps`` and the ``-(hbar^2/4m) rho'''`` term.

    The central pressure here is ``rho * m <(v - u)^2>``; the two returned
    fields agree, showing that the pressure/internal-energy equivalence
    holds only up to the third-derivative correction.
    """
    hbar, m, dx = psi.hbar, psi.mass, psi.grid.dx
    values = psi.values
    d1, d2 = _derivs(psi)
    rho = np.abs(values) ** 2
    cross = np.conj(values) * d1
    d2rho = 2.0 * np.real(np.conj(values) * d2) + 2.0 * np.abs(d1) ** 2
    ss2 = 0.5 * d2rho - _safe_ratio(cross.real**2, rho)  # sqrt(rho) sqrt(rho)''
    central = -(hbar**2) / m * ss2
    gap = spectral_derivative(central, dx, 1) - bohm_force_density(psi)
    rho3 = spectral_derivative(rho, dx, 3)
    return gap, -(hbar**2) / (4.0 * m) * rho3


# -- classical quadratures -----------------------------------------------------------


@dataclass(frozen=True)
class ClassicalMoments:
    rho: np.ndarray
    u: np.ndarray
    pressure: np.ndarray
    heat_flux: np.ndarray
    eps_c: np.ndarray
    mask: np.ndarray


def classical_moments(
    f: np.ndarray,
    x_grid: SpatialGrid,
    p_grid: MomentumGrid,
    mass: float = 1.0,
    rho_min_frac: float = RHO_MIN_FRAC,
) -> ClassicalMoments:
    """Velocity moments of a phase-space density, ``v = p / m``.

    Per-particle pressure and heat flux (divided by the density), and
    ``eps_c = (m/2) <(v - u)^2>``.  NaN outside ``mask``.
    """
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("f contains non-finite values")
    v = p_grid.p / mass
    dv = p_grid.dp / mass
    rho_v = f.sum(axis=1) * dv
    rho = f.sum(axis=1) * p_grid.dp
    mask = np.abs(rho) >= rho_min_frac * np.max(np.abs(rho))
    nan = np.full(rho.shape, np.nan)
    u, pressure, heat, eps_c = nan.copy(), nan.copy(), nan.copy(), nan.copy()
    fm = f[mask]
    u[mask] = (fm * v).sum(axis=1) * dv / rho_v[mask]
    c = v[None, :] - u[mask][:, None]
    pressure[mask] = mass * (fm * c**2).sum(axis=1) * dv / rho_v[mask]
    heat[mask] = mass * (fm * c**3).sum(axis=1) * dv / rho_v[mask]
    eps_c[mask] = 0.5 * mass * (fm * c**2).sum(axis=1) * dv / rho_v[mask]
    return ClassicalMoments(rho, u, pressure, heat, eps_c, mask)


@dataclass(frozen=True)
class MomentTrace:
    t: np.ndarray
    rho: np.ndarray
    momentum_density: np.ndarray
    energy_density: np.ndarray
    continuity: np.ndarray
    momentum: np.ndarray
    energy_balance: np.ndarray


def moment_trace(snapshots: Sequence[WaveField], potential: PolynomialPotential) -> MomentTrace:
    """Densities and residual fields of the three conservation laws."""
    cont = continuity_residual(snapshots)
    mom = momentum_residual(snapshots, potential)
    en = energy_residual(snapshots, potential)
    return MomentTrace(
        np.array([s.t for s in snapshots]),
        np.array([np.abs(s.values) ** 2 for s in snapshots]),
        np.array([s.mass * bilinear_current(s) for s in snapshots]),
        np.array([kinetic_energy_density(s) for s in snapshots]),
        cont.field,
        mom.field,
        en.field,
    )
