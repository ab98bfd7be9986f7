"""Wavefunctions, split-step evolution and hydrodynamic (Bohm) fields."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grids import (
    BOUNDARY_TOL,
    BoundaryLeakWarning,
    MomentumGrid,
    SpatialGrid,
    spectral_derivative,
    time_derivative,
    to_momentum,
)

__all__ = [
    "NormalizationError",
    "StabilityError",
    "WaveField",
    "PolynomialPotential",
    "BohmFields",
    "analytic_state",
    "gaussian_packet",
    "two_packet_state",
    "split_step_evolve",
    "schrodinger_residual",
    "bohm_decompose",
    "bohm_series",
    "energy_expectation",
    "bilinear_current",
    "RHO_MIN_FRAC",
    "fidelity",
    "momentum_space_kinetic",
    "hamiltonian_apply",
]

NORM_TOL = 1e-9
RHO_MIN_FRAC = 1e-6
OCCUPIED_FRAC = 1e-12


class NormalizationError(ValueError):
    pass


class StabilityError(ValueError):
    pass


@dataclass(frozen=True)
class WaveField:
    """Samples of psi(x_i) at evolution parameter ``t``.

    Construction fails unless ``sum |psi|^2 dx`` is 1 within ``NORM_TOL``.
    """

    grid: SpatialGrid
    values: np.ndarray
    mass: float = 1.0
    hbar: float = 1.0
    t: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (self.grid.n,):
            raise ValueError(f"values must have shape ({self.grid.n},), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("wavefunction contains non-finite values")
        if not (self.mass > 0 and self.hbar > 0):
            raise ValueError("mass and hbar must be positive")
        norm = float(np.sum(np.abs(values) ** 2) * self.grid.dx)
        if abs(norm - 1.0) > NORM_TOL:
            raise NormalizationError(f"wavefunction norm {norm!r} differs from 1 by more than {NORM_TOL:g}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def normalized(cls, grid: SpatialGrid, values, mass=1.0, hbar=1.0, t=0.0) -> "WaveField":
        values = np.asarray(values, dtype=complex)
        norm = np.sqrt(np.sum(np.abs(values) ** 2) * grid.dx)
        return cls(grid, values / norm, mass, hbar, t)

    @property
    def pgrid(self) -> MomentumGrid:
        return MomentumGrid(self.grid.n, self.grid.dx, self.hbar)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.dx)

    def momentum_amplitude(self) -> np.ndarray:
        return to_momentum(self.values, self.grid, self.pgrid)

    def with_values(self, values, t=None) -> "WaveField":
        return WaveField(self.grid, values, self.mass, self.hbar, self.t if t is None else t)


@dataclass(frozen=True)
class PolynomialPotential:
    """``V(x) = sum_k c_k x**k`` with degree at most 4."""

    coefficients: tuple = (0.0,)

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        if len(coeffs) == 0:
            coeffs = (0.0,)
        if len(coeffs) > 5:
            if any(c != 0.0 for c in coeffs[5:]):
                raise ValueError("degree-too-high: polynomial potentials are limited to degree 4")
            coeffs = coeffs[:5]
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def harmonic(cls, omega: float = 1.0, mass: float = 1.0) -> "PolynomialPotential":
        return cls((0.0, 0.0, 0.5 * mass * omega**2))

    @classmethod
    def constant(cls, value: float) -> "PolynomialPotential":
        return cls((value,))

    @property
    def degree(self) -> int:
        nz = [k for k, c in enumerate(self.coefficients) if c != 0.0]
        return nz[-1] if nz else 0

    def derivative_coefficients(self, order: int) -> tuple:
        coeffs = list(self.coefficients)
        for _ in range(order):
            coeffs = [k * c for k, c in enumerate(coeffs)][1:] or [0.0]
        return tuple(coeffs)

    def derivative(self, x, order: int = 1) -> np.ndarray:
        """Analytic ``d^order V / dx^order``."""
        if order < 0:
            raise ValueError("order must be non-negative")
        coeffs = self.derivative_coefficients(order)
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), coeffs)

    def __call__(self, x) -> np.ndarray:
        return self.derivative(x, 0)

    def force(self, x) -> np.ndarray:
        return -self.derivative(x, 1)

    @property
    def is_constant(self) -> bool:
        return self.degree == 0


# -- closed-form states ------------------------------------------------------


def gaussian_packet(x, sigma=1.0, p0=0.0, x0=0.0, t=0.0, mass=1.0, hbar=1.0) -> np.ndarray:
    """Freely spreading Gaussian, ``|psi|^2`` has width ``sigma`` at t = 0."""
    tau = hbar * t / (2.0 * mass * sigma**2)
    width = 1.0 + 1j * tau
    xc = x0 + p0 * t / mass
    amp = (2.0 * np.pi * sigma**2) ** -0.25 / np.sqrt(width)
    phase = p0 * (np.asarray(x) - x0) / hbar - p0**2 * t / (2.0 * mass * hbar)
    return amp * np.exp(-((np.asarray(x) - xc) ** 2) / (4.0 * sigma**2 * width) + 1j * phase)


def _ho_coherent(x, omega, x0, p0, t, mass, hbar):
    xc = x0 * np.cos(omega * t) + p0 / (mass * omega) * np.sin(omega * t)
    pc = p0 * np.cos(omega * t) - mass * omega * x0 * np.sin(omega * t)
    amp = (mass * omega / (np.pi * hbar)) ** 0.25
    x = np.asarray(x)
    expo = (
        -mass * omega * (x - xc) ** 2 / (2.0 * hbar)
        + 1j * pc * (x - 0.5 * xc) / hbar
        - 0.5j * omega * t
        + 0.5j * p0 * x0 / hbar
    )
    return amp * np.exp(expo)


ANALYTIC_KINDS = ("free_gaussian", "ho_ground", "ho_coherent")


def analytic_state(
    kind: str,
    grid: SpatialGrid,
    t: float = 0.0,
    *,
    sigma: float = 1.0,
    p0: float = 0.0,
    x0: float = 0.0,
    omega: float = 1.0,
    mass: float = 1.0,
    hbar: float = 1.0,
) -> WaveField:
    """Exact closed-form solution sampled on ``grid`` at time ``t``.

    ``ho_coherent`` starts at ``(x0, p0)``; ``ho_ground`` ignores both.
    """
    if sigma <= 0 or omega <= 0:
        raise ValueError("sigma and omega must be positive")
    x = grid.x
    if kind == "free_gaussian":
        values = gaussian_packet(x, sigma, p0, x0, t, mass, hbar)
    elif kind == "ho_ground":
        values = _ho_coherent(x, omega, 0.0, 0.0, t, mass, hbar)
    elif kind == "ho_coherent":
        values = _ho_coherent(x, omega, x0, p0, t, mass, hbar)
    else:
        raise ValueError(f"unsupported-kind: {kind!r} (expected one of {ANALYTIC_KINDS})")
    return WaveField(grid, values, mass, hbar, t)


def two_packet_state(
    grid: SpatialGrid,
    separation: float = 6.0,
    sigma: float = 1.0,
    p0: float = 0.0,
    relative_phase: float = 0.0,
    mass: float = 1.0,
    hbar: float = 1.0,
) -> WaveField:
    """Normalized superposition of two Gaussians at ``+-separation/2``."""
    x = grid.x
    left = gaussian_packet(x, sigma, p0, -0.5 * separation, 0.0, mass, hbar)
    right = gaussian_packet(x, sigma, -p0, 0.5 * separation, 0.0, mass, hbar)
    return WaveField.normalized(grid, left + np.exp(1j * relative_phase) * right, mass, hbar)


# -- evolution ---------------------------------------------------------------


def _occupied_max_kinetic_phase(psi: WaveField, dt: float) -> float:
    phi2 = np.abs(psi.momentum_amplitude()) ** 2
    occupied = phi2 >= OCCUPIED_FRAC * phi2.max()
    p = psi.pgrid.p[occupied]
    return float(np.max(p**2) / (2.0 * psi.mass) * dt / psi.hbar)


def split_step_evolve(
    psi0: WaveField,
    potential: PolynomialPotential,
    dt: float,
    steps: int,
    stride: int = 1,
) -> list[WaveField]:
    """Strang split-step integration of the Schrödinger equation.

    Each step applies half a kinetic step, a full potential step and another
    half kinetic step.  Snapshots are taken every ``stride`` steps, starting
    with ``psi0`` itself.

    Raises :class:`StabilityError` when ``dt * max|V| / hbar`` or the largest
    kinetic phase over the occupied momentum band reaches 0.5.
    """
    if not dt > 0:
        raise StabilityError(f"dt must be positive, got {dt}")
    if steps < 0 or stride < 1:
        raise ValueError("steps must be >= 0 and stride >= 1")
    grid, hbar, mass = psi0.grid, psi0.hbar, psi0.mass
    v = potential(grid.x)
    v_phase = dt * float(np.max(np.abs(v))) / hbar
    if v_phase >= 0.5:
        raise StabilityError(f"stability guard: dt*max|V|/hbar = {v_phase:.3g} >= 0.5")
    k_phase = _occupied_max_kinetic_phase(psi0, dt)
    if k_phase >= 0.5:
        raise StabilityError(f"stability guard: occupied kinetic phase {k_phase:.3g} >= 0.5")

    k = 2.0 * np.pi * np.fft.fftfreq(grid.n, d=grid.dx)
    half_kinetic = np.exp(-0.5j * dt * hbar * k**2 / (2.0 * mass))
    potential_step = np.exp(-1j * dt * v / hbar)

    psi = np.array(psi0.values)
    snaps = [psi0]
    warned = False
    for step in range(1, steps + 1):
        psi = np.fft.ifft(half_kinetic * np.fft.fft(psi))
        psi = potential_step * psi
        psi = np.fft.ifft(half_kinetic * np.fft.fft(psi))
        if step % stride == 0:
            edge = max(abs(psi[0]), abs(psi[-1]))
            if edge > BOUNDARY_TOL and not warned:
                warnings.warn(
                    f"boundary leak: |psi| = {edge:.3e} at the periodic edge (t = {psi0.t + step * dt:g})",
                    BoundaryLeakWarning,
                    stacklevel=2,
                )
                warned = True
            snaps.append(WaveField(grid, psi.copy(), mass, hbar, psi0.t + step * dt))
    return snaps


def hamiltonian_apply(psi: WaveField, potential: PolynomialPotential) -> np.ndarray:
    lap = spectral_derivative(psi.values, psi.grid.dx, 2)
    return -(psi.hbar**2) / (2.0 * psi.mass) * lap + potential(psi.grid.x) * psi.values


def schrodinger_residual(snapshots: Sequence[WaveField], potential: PolynomialPotential) -> np.ndarray:
    """``i hbar d_t psi - H psi`` on the interior snapshots (centered in time)."""
    if len(snapshots) < 3:
        raise ValueError("insufficient-snapshots: need at least 3 snapshots")
    dt = _uniform_dt(snapshots)
    frames = np.array([s.values for s in snapshots])
    dpsi = time_derivative(frames, dt)[1:-1]
    h = np.array([hamiltonian_apply(s, potential) for s in snapshots[1:-1]])
    return 1j * snapshots[0].hbar * dpsi - h


def _uniform_dt(snapshots: Sequence[WaveField]) -> float:
    times = np.array([s.t for s in snapshots])
    steps = np.diff(times)
    if len(steps) == 0 or np.any(steps <= 0):
        raise ValueError("snapshots must be strictly increasing in time")
    if np.ptp(steps) > 1e-9 * max(abs(steps[0]), 1e-300) + 1e-14:
        raise ValueError("snapshots must be uniformly spaced in time")
    return float(np.mean(steps))


def energy_expectation(psi: WaveField, potential: PolynomialPotential) -> float:
    return float(np.real(np.sum(np.conj(psi.values) * hamiltonian_apply(psi, potential))) * psi.grid.dx)


# -- hydrodynamic fields -----------------------------------------------------


def bilinear_current(psi: WaveField) -> np.ndarray:
    """Probability current ``Re[psi (i hbar) d_x psi*] / m``.

    Real and imaginary parts are differentiated separately, so a real psi
    gives exactly zero current.
    """
    a, b = psi.values.real, psi.values.imag
    da = spectral_derivative(a, psi.grid.dx, 1)
    db = spectral_derivative(b, psi.grid.dx, 1)
    return psi.hbar * (a * db - b * da) / psi.mass


def _masked_divide(num, den, mask):
    out = np.full(np.shape(num), np.nan)
    out[mask] = num[mask] / den[mask]
    return out


@dataclass(frozen=True)
class BohmFields:
    """Hydrodynamic fields of one wavefunction.

    Division-based fields are NaN outside ``mask``.  ``eps`` is the Bohm
    internal energy ``-(hbar^2/2m) (sqrt rho)'' / sqrt rho``; ``eps_paper`` is
    the ``-(hbar^2/2m rho)(rho'' - rho'^2/(2 rho))`` variant, twice as large.
    """

    x: np.ndarray
    rho: np.ndarray
    u: np.ndarray
    eps: np.ndarray
    k_total: np.ndarray
    eps_paper: np.ndarray
    mask: np.ndarray
    e_balance: np.ndarray | None = None
    t: float = 0.0
    mass: float = 1.0
    hbar: float = 1.0
    extras: dict = field(default_factory=dict)


def bohm_decompose(
    psi: WaveField,
    rho_min_frac: float = RHO_MIN_FRAC,
    dpsi_dt: np.ndarray | None = None,
) -> BohmFields:
    """Density, velocity, kinetic and internal energies from bilinear forms.

    The phase is never unwrapped.  When ``dpsi_dt`` is supplied the local
    energy ``-hbar d_t(phase) = Re[i hbar psi* d_t psi] / rho`` is filled in.
    """
    hbar, m, dx = psi.hbar, psi.mass, psi.grid.dx
    values = psi.values
    rho = np.abs(values) ** 2
    mask = rho >= rho_min_frac * rho.max()
    conj = np.conj(values)
    d2 = spectral_derivative(conj, dx, 2)
    u = _masked_divide(bilinear_current(psi), rho, mask)
    k_total = _masked_divide(np.real((1j * hbar) ** 2 * values * d2) / (2.0 * m), rho, mask)
    eps = k_total - 0.5 * m * u**2
    drho = spectral_derivative(rho, dx, 1)
    d2rho = spectral_derivative(rho, dx, 2)
    eps_paper = np.full_like(rho, np.nan)
    eps_paper[mask] = (
        -(hbar**2) / (2.0 * m * rho[mask]) * (d2rho[mask] - drho[mask] ** 2 / (2.0 * rho[mask]))
    )
    e_balance = None
    if dpsi_dt is not None:
        e_balance = _masked_divide(np.real(1j * hbar * conj * np.asarray(dpsi_dt)), rho, mask)
    return BohmFields(psi.x, rho, u, eps, k_total, eps_paper, mask, e_balance, psi.t, m, hbar)


def bohm_series(snapshots: Sequence[WaveField], rho_min_frac: float = RHO_MIN_FRAC) -> list[BohmFields]:
    """:func:`bohm_decompose` for each snapshot with ``d_t psi`` from the sequence."""
    if len(snapshots) < 3:
        return [bohm_decompose(s, rho_min_frac) for s in snapshots]
    dt = _uniform_dt(snapshots)
    dpsi = time_derivative(np.array([s.values for s in snapshots]), dt)
    return [bohm_decompose(s, rho_min_frac, d) for s, d in zip(snapshots, dpsi)]


def momentum_space_kinetic(psi: WaveField) -> float:
    """``<p^2>/2m`` by quadrature over the momentum grid."""
    phi = psi.momentum_amplitude()
    pg = psi.pgrid
    return float(np.sum(np.abs(phi) ** 2 * pg.p**2) * pg.dp / (2.0 * psi.mass))


def fidelity(a: WaveField, b: WaveField) -> float:
    return float(abs(np.sum(np.conj(a.values) * b.values) * a.grid.dx) ** 2)

