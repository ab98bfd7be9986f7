"""Uniform periodic position/momentum grids and spectral helpers.

Transform convention (1D)::

    phi(p) = (2 pi hbar)^(-1/2) * integral psi(x) exp(-i p x / hbar) dx

evaluated by the rectangle rule, which is exact for periodic band-limited
samples.  Momentum samples are stored in ascending order, k in [-n/2, n/2).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridError",
    "SpatialGrid",
    "MomentumGrid",
    "make_grids",
    "to_momentum",
    "to_position",
    "spectral_derivative",
    "check_boundary",
    "time_derivative",
    "wavenumbers",
    "BoundaryLeakWarning",
]

BOUNDARY_TOL = 1e-8


class GridError(ValueError):
    """Invalid grid parameters or derivative order."""


class BoundaryLeakWarning(UserWarning):
    """The field is not negligible at the periodic boundary."""


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SpatialGrid:
    n: int
    x_min: float
    x_max: float

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or isinstance(self.n, bool):
            raise GridError(f"invalid-n: n must be an integer, got {self.n!r}")
        if self.n < 8 or not _is_power_of_two(int(self.n)):
            raise GridError(f"invalid-n: n must be a power of two >= 8, got {self.n}")
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)) or self.x_max <= self.x_min:
            raise GridError(
                f"invalid-domain: need x_max > x_min, got [{self.x_min}, {self.x_max})"
            )

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def spacing(self) -> float:
        return self.dx

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n)

    @property
    def points(self) -> np.ndarray:
        return self.x


@dataclass(frozen=True)
class MomentumGrid:
    """Momentum axis conjugate to a :class:`SpatialGrid`.

    ``p_k = hbar * 2 pi k / (n dx)`` for ``k = -n/2 .. n/2 - 1``.
    """

    n: int
    dx: float
    hbar: float

    @property
    def dp(self) -> float:
        return 2.0 * np.pi * self.hbar / (self.n * self.dx)

    @property
    def spacing(self) -> float:
        return self.dp

    @property
    def p(self) -> np.ndarray:
        return self.dp * np.arange(-(self.n // 2), self.n // 2)

    @property
    def points(self) -> np.ndarray:
        return self.p


def make_grids(n: int, x_min: float, x_max: float, hbar: float = 1.0) -> tuple[SpatialGrid, MomentumGrid]:
    """Build a conjugate pair with ``dp * dx * n == 2 pi hbar``."""
    if not hbar > 0:
        raise GridError(f"invalid-domain: hbar must be positive, got {hbar}")
    xg = SpatialGrid(n, float(x_min), float(x_max))
    return xg, MomentumGrid(xg.n, xg.dx, float(hbar))


def _momentum_phase(xg: SpatialGrid, pg: MomentumGrid) -> np.ndarray:
    # exp(-i p_k x_min / hbar); x_min offset of the sample origin
    return np.exp(-1j * pg.p * xg.x_min / pg.hbar)


def to_momentum(psi: np.ndarray, xg: SpatialGrid, pg: MomentumGrid) -> np.ndarray:
    """Momentum amplitude ``phi(p_k)`` of position samples ``psi(x_i)``."""
    psi = np.asarray(psi)
    if not np.all(np.isfinite(psi)):
        raise ValueError("psi contains non-finite values")
    spec = np.fft.fftshift(np.fft.fft(psi, axis=-1), axes=-1)
    return spec * _momentum_phase(xg, pg) * (xg.dx / np.sqrt(2.0 * np.pi * pg.hbar))


def to_position(phi: np.ndarray, xg: SpatialGrid, pg: MomentumGrid) -> np.ndarray:
    """Inverse of :func:`to_momentum`."""
    phi = np.asarray(phi)
    spec = np.fft.ifftshift(phi / _momentum_phase(xg, pg), axes=-1)
    return np.fft.ifft(spec, axis=-1) * (np.sqrt(2.0 * np.pi * pg.hbar) / xg.dx)


def wavenumbers(n: int, spacing: float) -> np.ndarray:
    """Angular wavenumbers in FFT order for a periodic axis."""
    return 2.0 * np.pi * np.fft.fftfreq(n, d=spacing)


def spectral_derivative(values: np.ndarray, spacing: float, order: int = 1, axis: int = -1) -> np.ndarray:
    """``order``-th derivative of periodic samples along ``axis``.

    The unpaired Nyquist mode is dropped for odd orders so that real input
    stays real.
    """
    if not isinstance(order, (int, np.integer)) or not 1 <= order <= 4:
        raise GridError(f"order-out-of-range: order must be in [1, 4], got {order!r}")
    values = np.asarray(values)
    n = values.shape[axis]
    k = wavenumbers(n, spacing)
    mult = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        mult[n // 2] = 0.0
    shape = [1] * values.ndim
    shape[axis] = n
    out = np.fft.ifft(np.fft.fft(values, axis=axis) * mult.reshape(shape), axis=axis)
    if np.isrealobj(values):
        return out.real
    return out


def time_derivative(frames: np.ndarray, dt: float) -> np.ndarray:
    """Second-order time derivative of equally spaced frames (axis 0).

    Centered differences inside, one-sided three-point stencils at the ends.
    """
    frames = np.asarray(frames)
    if frames.shape[0] < 3:
        raise ValueError("insufficient-snapshots: need at least 3 frames")
    out = np.empty_like(frames)
    out[1:-1] = (frames[2:] - frames[:-2]) / (2.0 * dt)
    out[0] = (-3.0 * frames[0] + 4.0 * frames[1] - frames[2]) / (2.0 * dt)
    out[-1] = (3.0 * frames[-1] - 4.0 * frames[-2] + frames[-3]) / (2.0 * dt)
    return out


def check_boundary(values: np.ndarray, tol: float = BOUNDARY_TOL, what: str = "psi") -> float:
    """Warn when the field is not negligible at either periodic edge.

    Returns the largest edge magnitude.
    """
    values = np.abs(np.asarray(values))
    edge = float(max(values[..., 0].max(), values[..., -1].max()))
    if edge > tol:
        warnings.warn(
            f"boundary leak: |{what}| = {edge:.3e} at the periodic edge exceeds {tol:g}",
            BoundaryLeakWarning,
            stacklevel=2,
        )
    return edge
