"""Residuals of the phase-space transport equations, a classical Liouville
solver, and the time-broadening magnitude estimate.

Residuals are evaluated on Q (or q) built from Schrödinger-evolved states,
with centered time differences over the snapshot sequence and spectral
derivatives in x and p.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import constants
from scipy.integrate import solve_ivp

from .grids import MomentumGrid, SpatialGrid, make_grids, spectral_derivative, time_derivative, wavenumbers
from .phasespace import PHI_MASK, PhaseSpaceField, build_Q, effective_potential_avg, local_q
from .schrodinger import PolynomialPotential, WaveField, analytic_state, schrodinger_residual

__all__ = [
    "ResidualReport",
    "BroadeningEstimate",
    "CFLError",
    "residual_eq19",
    "residual_eq23",
    "residual_eq26",
    "classical_liouville_evolve",
    "classical_trajectory",
    "ehrenfest_compare",
    "EhrenfestTrace",
    "broadening_estimate",
    "hbar_scaling_study",
    "quantum_broadening_term",
    "imq_null_integrals",
    "fitted_order",
]

HBAR_SI = constants.hbar


@dataclass
class ResidualReport:
    """Norms of one residual field.

    ``l2`` is the cell-weighted L2 norm ``sqrt(sum |r|^2 dx [dp])`` over the
    unmasked cells; when several time levels are evaluated the largest
    per-level value is reported.
    """

    equation: str
    n: int
    dx: float
    dp: float | None
    dt: float | None
    l2: float
    linf: float
    mask: str = "none"
    details: dict = field(default_factory=dict)
    field: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("field")
        return out


def _norms(residual: np.ndarray, cell: float, mask: np.ndarray | None = None) -> tuple[float, float]:
    """Max over leading (time) axis of the cell-weighted L2, and global L-inf."""
    r = np.abs(np.asarray(residual))
    if mask is not None:
        r = np.where(mask, r, 0.0)
    if r.ndim == 1:
        r = r[None]
    flat = r.reshape(r.shape[0], -1)
    l2 = float(np.max(np.sqrt(np.sum(flat**2, axis=1) * cell)))
    return l2, float(flat.max())


def _uniform_dt(times: Sequence[float], dt: float | None) -> float:
    times = np.asarray(times, dtype=float)
    if len(times) < 3:
        raise ValueError("insufficient-snapshots: need at least 3 snapshots")
    steps = np.diff(times)
    if dt is None:
        dt = float(np.mean(steps))
    if np.any(np.abs(steps - dt) > 1e-9 * dt + 1e-14):
        raise ValueError("snapshots must be uniformly spaced by dt")
    return float(dt)


def _as_Q_list(states) -> list[PhaseSpaceField]:
    return [s if isinstance(s, PhaseSpaceField) else build_Q(s) for s in states]


def _column_mask(Q: PhaseSpaceField, mask_level: float) -> np.ndarray:
    return Q.p_marginal().real >= mask_level


# -- Q and f transport --------------------------------------------------------


def residual_eq19(
    snapshots,
    potential: PolynomialPotential,
    dt: float | None = None,
    mask_level: float = PHI_MASK,
) -> ResidualReport:
    """Residual of the nonlocal transport equation for Q::

        d_t Q + (p/m) d_x Q - (i hbar/2m) d_x^2 Q - (1/(i hbar)) [V(x) - <V>(p)] Q

    ``snapshots`` are WaveFields or PhaseSpaceFields at uniform spacing.  Only
    momentum columns with ``|phi(p)|^2 >= mask_level`` (at every interior
    snapshot) enter the norms.
    """
    Qs = _as_Q_list(snapshots)
    dt = _uniform_dt([Q.t for Q in Qs], dt)
    Q0 = Qs[0]
    hbar, m, dx = Q0.hbar, Q0.mass, Q0.dx
    p = Q0.p[None, :]
    v = potential(Q0.x)[:, None]
    dQdt = time_derivative(np.array([Q.values for Q in Qs]), dt)
    residuals, masks = [], []
    for idx in range(1, len(Qs) - 1):
        Q = Qs[idx]
        avg, mask = effective_potential_avg(Q, potential, mask_level)
        avg = np.where(mask, avg, 0.0)
        dQ = spectral_derivative(Q.values, dx, 1, axis=0)
        d2Q = spectral_derivative(Q.values, dx, 2, axis=0)
        res = (
            dQdt[idx]
            + (p / m) * dQ
            - (1j * hbar / (2.0 * m)) * d2Q
            - (v - avg[None, :]) * Q.values / (1j * hbar)
        )
        residuals.append(res)
        masks.append(np.broadcast_to(mask[None, :], res.shape))
    residuals = np.array(residuals)
    masks = np.array(masks)
    col_mask = masks.all(axis=0)
    l2, linf = _norms(residuals, dx * Q0.dp, col_mask[None])
    return ResidualReport(
        "eq19",
        Q0.x_grid.n,
        dx,
        Q0.dp,
        dt,
        l2,
        linf,
        mask=f"|phi(p)|^2 >= {mask_level:g} ({int(col_mask[0].sum())} of {Q0.p_grid.n} momentum columns)",
        field=residuals,
        details={"mask_columns": col_mask[0]},
    )


def _series_terms(potential: PolynomialPotential, n_max: int):
    """Coefficient and target ('f' or 'imQ') of each n >= 2 series term."""
    terms = []
    for n in range(2, n_max + 1):
        if n % 2 == 1:
            sign, target = (-1) ** ((n - 1) // 2), "f"
        else:
            sign, target = (-1) ** ((n - 2) // 2), "imQ"
        terms.append((n, sign, target))
    return terms


def residual_eq23(
    snapshots,
    potential: PolynomialPotential,
    dt: float | None = None,
    n_max: int | None = None,
    mask_level: float = PHI_MASK,
) -> ResidualReport:
    """Residual of the real transport equation for f = Re Q::

        d_t f + (p/m) d_x f + F d_p f + (hbar/2m) d_x^2 Im Q
            - sum_{odd n>=3} (-1)^((n-1)/2) hbar^(n-1)/n! V^(n) d_p^n f
            - sum_{even n>=2} (-1)^((n-2)/2) hbar^(n-1)/n! V^(n) d_p^n Im Q

    The Taylor series terminates for polynomial V, so with ``n_max`` at least
    the degree the truncation is exact.  Norms use the same momentum-column
    mask as :func:`residual_eq19` so the two can be compared directly.
    """
    degree = potential.degree
    if degree > 4:
        raise ValueError("degree-too-high: potential degree must be <= 4")
    if n_max is None:
        n_max = max(degree, 2)
    if n_max < degree:
        raise ValueError(f"truncation-below-degree: n_max={n_max} < degree {degree}")
    if n_max > 4:
        raise ValueError("n_max above 4 needs derivatives beyond order 4")
    Qs = _as_Q_list(snapshots)
    dt = _uniform_dt([Q.t for Q in Qs], dt)
    Q0 = Qs[0]
    hbar, m, dx, dp = Q0.hbar, Q0.mass, Q0.dx, Q0.dp
    x, p = Q0.x, Q0.p[None, :]
    force = potential.force(x)[:, None]
    dfdt = time_derivative(np.array([Q.values.real for Q in Qs]), dt)
    terms = _series_terms(potential, n_max)
    residuals, masks = [], []
    for idx in range(1, len(Qs) - 1):
        Q = Qs[idx]
        f, im = Q.values.real, Q.values.imag
        res = (
            dfdt[idx]
            + (p / m) * spectral_derivative(f, dx, 1, axis=0)
            + force * spectral_derivative(f, dp, 1, axis=1)
            + (hbar / (2.0 * m)) * spectral_derivative(im, dx, 2, axis=0)
        )
        for n, sign, target in terms:
            vn = potential.derivative(x, n)
            if not np.any(vn):
                continue
            coeff = sign * hbar ** (n - 1) / math.factorial(n)
            src = f if target == "f" else im
            res = res - coeff * vn[:, None] * spectral_derivative(src, dp, n, axis=1)
        residuals.append(res)
        masks.append(_column_mask(Q, mask_level))
    residuals = np.array(residuals)
    col_mask = np.all(masks, axis=0)
    l2, linf = _norms(residuals, dx * dp, col_mask[None, None, :])
    return ResidualReport(
        "eq23",
        Q0.x_grid.n,
        dx,
        dp,
        dt,
        l2,
        linf,
        mask=f"|phi(p)|^2 >= {mask_level:g} ({int(col_mask.sum())} of {Q0.p_grid.n} momentum columns)",
        field=residuals,
        details={"n_max": n_max, "mask_columns": col_mask},
    )


# -- local q ---------------------------------------------------------------------


def occupied_momenta(psi: WaveField, count: int = 7, level: float = 1e-6) -> np.ndarray:
    """``count`` momentum grid points spread across the occupied band."""
    phi2 = np.abs(psi.momentum_amplitude()) ** 2
    pg = psi.pgrid
    idx = np.flatnonzero(phi2 >= level * phi2.max())
    picks = np.unique(np.round(np.linspace(idx[0], idx[-1], count)).astype(int))
    return pg.p[picks]


def residual_eq26(
    snapshots: Sequence[WaveField],
    potential: PolynomialPotential,
    p_values=None,
    dt: float | None = None,
    time_reversed: bool = False,
) -> ResidualReport:
    """Residual of the Hamiltonian-like equation for the local function q::

        i hbar (d_t + (p/m) d_x) q - [-(hbar^2/2m) d_x^2 + V + p^2/2m] q

    With ``time_reversed`` the conjugate ``q*`` is checked against the
    conjugated equation (``i -> -i``).  Momenta default to seven grid points
    across the occupied band of the middle snapshot; they are snapped to the
    grid so that ``q`` stays periodic.
    """
    dt = _uniform_dt([s.t for s in snapshots], dt)
    mid = snapshots[len(snapshots) // 2]
    pg = mid.pgrid
    if p_values is None:
        p_values = occupied_momenta(mid)
    p_values = np.atleast_1d(np.asarray(p_values, dtype=float))
    cols = np.array([int(np.argmin(np.abs(pg.p - pv))) for pv in p_values])
    p_used = pg.p[cols]
    hbar, m, dx = mid.hbar, mid.mass, mid.grid.dx
    qs = np.array([local_q(s).values[:, cols] for s in snapshots])  # [t, x, p]
    sign = 1.0
    if time_reversed:
        qs = np.conj(qs)
        sign = -1.0
    dqdt = time_derivative(qs, dt)[1:-1]
    q = qs[1:-1]
    dq = spectral_derivative(q, dx, 1, axis=1)
    d2q = spectral_derivative(q, dx, 2, axis=1)
    v = potential(mid.grid.x)[None, :, None]
    pp = p_used[None, None, :]
    res = sign * 1j * hbar * (dqdt + (pp / m) * dq) - (
        -(hbar**2) / (2.0 * m) * d2q + v * q + pp**2 / (2.0 * m) * q
    )
    per_p_l2 = np.sqrt(np.sum(np.abs(res) ** 2, axis=1) * dx).max(axis=0)
    return ResidualReport(
        "eq26" + ("_reversed" if time_reversed else ""),
        mid.grid.n,
        dx,
        None,
        dt,
        float(per_p_l2.max()),
        float(np.abs(res).max()),
        mask="none",
        field=res,
        details={"p_values": p_used.tolist(), "per_p_l2": per_p_l2.tolist()},
    )


def schrodinger_report(snapshots: Sequence[WaveField], potential: PolynomialPotential) -> ResidualReport:
    res = schrodinger_residual(snapshots, potential)
    dx = snapshots[0].grid.dx
    l2, linf = _norms(res, dx)
    return ResidualReport("schrodinger", snapshots[0].grid.n, dx, None, snapshots[1].t - snapshots[0].t,
                          l2, linf, field=res)


# -- classical transport -----------------------------------------------------------


class CFLError(ValueError):
    pass


def _shift(values: np.ndarray, kappa: np.ndarray, shift: np.ndarray, axis: int) -> np.ndarray:
    """Periodic spectral translation ``g(s) -> g(s - shift)`` along ``axis``."""
    spec = np.fft.fft(values, axis=axis)
    if axis == 0:
        phase = np.exp(-1j * kappa[:, None] * shift[None, :])
    else:
        phase = np.exp(-1j * shift[:, None] * kappa[None, :])
    return np.fft.ifft(spec * phase, axis=axis).real


def classical_liouville_evolve(
    f0: np.ndarray,
    xg: SpatialGrid,
    pg: MomentumGrid,
    potential: PolynomialPotential,
    dt: float,
    steps: int,
    mass: float = 1.0,
    stride: int = 1,
) -> list[np.ndarray]:
    """Advance ``d_t f + (p/m) d_x f + F d_p f = 0``.

    Strang splitting of exact spectral shears: half free streaming in x, a
    full kick in p, half free streaming.  Returns ``f0`` followed by every
    ``stride``-th step.
    """
    f0 = np.asarray(f0, dtype=float)
    if f0.shape != (xg.n, pg.n):
        raise ValueError(f"f0 must have shape ({xg.n}, {pg.n})")
    if not np.all(np.isfinite(f0)):
        raise ValueError("f0 contains non-finite values")
    x, p = xg.x, pg.p
    force = potential.force(x)
    cfl_x = float(np.max(np.abs(p)) / mass * dt / xg.dx)
    cfl_p = float(np.max(np.abs(force)) * dt / pg.dp)
    if cfl_x >= 1.0 or cfl_p >= 1.0:
        raise CFLError(f"CFL violation: x-number {cfl_x:.3g}, p-number {cfl_p:.3g} (both must be < 1)")
    kx = wavenumbers(xg.n, xg.dx)
    kp = wavenumbers(pg.n, pg.dp)
    half_drift = 0.5 * dt * p / mass
    kick = dt * force
    f = f0.copy()
    out = [f0.copy()]
    for step in range(1, steps + 1):
        f = _shift(f, kx, half_drift, axis=0)
        f = _shift(f, kp, kick, axis=1)
        f = _shift(f, kx, half_drift, axis=0)
        if step % stride == 0:
            out.append(f.copy())
    return out


def classical_trajectory(x0: float, p0: float, potential: PolynomialPotential, times, mass: float = 1.0):
    """Hamilton's equations integrated to near machine precision."""
    times = np.asarray(times, dtype=float)

    def rhs(_t, y):
        return [y[1] / mass, float(potential.force(y[0]))]

    sol = solve_ivp(rhs, (times[0], times[-1]), [x0, p0], t_eval=times, rtol=1e-12, atol=1e-13, method="DOP853")
    return sol.y[0], sol.y[1]


@dataclass
class EhrenfestTrace:
    t: np.ndarray
    x_quantum: np.ndarray
    p_quantum: np.ndarray
    x_classical: np.ndarray
    p_classical: np.ndarray

    @property
    def max_deviation(self) -> float:
        return float(
            max(np.max(np.abs(self.x_quantum - self.x_classical)), np.max(np.abs(self.p_quantum - self.p_classical)))
        )


def phase_space_centroid(Q: PhaseSpaceField) -> tuple[float, float]:
    f = Q.values.real
    cell = Q.dx * Q.dp
    return float(np.sum(f * Q.x[:, None]) * cell), float(np.sum(f * Q.p[None, :]) * cell)


def ehrenfest_compare(snapshots: Sequence[WaveField], potential: PolynomialPotential) -> EhrenfestTrace:
    """Centroids of f against the classical characteristic from the initial centroid.

    Exact agreement is expected only for potentials of degree <= 2.
    """
    if potential.degree > 2:
        raise ValueError("ehrenfest_compare requires a free or harmonic potential")
    t = np.array([s.t for s in snapshots])
    cents = np.array([phase_space_centroid(build_Q(s)) for s in snapshots])
    xc, pc = classical_trajectory(cents[0, 0], cents[0, 1], potential, t, snapshots[0].mass)
    return EhrenfestTrace(t, cents[:, 0], cents[:, 1], xc, pc)


# -- magnitudes -----------------------------------------------------------------------


@dataclass(frozen=True)
class BroadeningEstimate:
    """``rate = hbar / (2 m d^5)`` in s^-1 m^-3."""

    mass: float
    size: float
    rate: float


def broadening_estimate(mass: float, size: float) -> BroadeningEstimate:
    if not (mass > 0 and size > 0) or not (math.isfinite(mass) and math.isfinite(size)):
        raise ValueError(f"nonpositive inputs: mass={mass}, size={size} must both be positive")
    return BroadeningEstimate(mass, size, HBAR_SI / (2.0 * mass * size**5))


def quantum_broadening_term(Q: PhaseSpaceField) -> np.ndarray:
    """``(hbar/2m) d_x^2 Im Q``, the leading non-classical term for f."""
    return Q.hbar / (2.0 * Q.mass) * spectral_derivative(Q.values.imag, Q.dx, 2, axis=0)


def imq_null_integrals(Q: PhaseSpaceField) -> tuple[float, float]:
    """Largest ``|sum_p Im Q dp|`` over x and ``|sum_x Im Q dx|`` over p."""
    return float(np.max(np.abs(Q.imag.sum(axis=1) * Q.dp))), float(np.max(np.abs(Q.imag.sum(axis=0) * Q.dx)))


def fitted_order(scales, values) -> float:
    """Least-squares slope of ``log(values)`` against ``log(scales)``."""
    return float(np.polyfit(np.log(np.asarray(scales, float)), np.log(np.asarray(values, float)), 1)[0])


def hbar_scaling_study(
    hbars=(1.0, 0.5, 0.25, 0.125),
    n: int = 256,
    x_min: float = -16.0,
    x_max: float = 16.0,
    sigma: float = 1.0,
    p0: float = 0.5,
    mass: float = 1.0,
) -> dict:
    """Size of the leading quantum term as hbar shrinks at fixed classical data.

    The Gaussian is rebuilt at each hbar with the same position width and mean
    momentum.  The measure is the phase-space integral ``sum |term| dx dp``,
    which is comparable across hbar because f is normalized to one.
    """
    rows = []
    for hbar in hbars:
        xg, _ = make_grids(n, x_min, x_max, hbar)
        psi = analytic_state("free_gaussian", xg, sigma=sigma, p0=p0, mass=mass, hbar=hbar)
        Q = build_Q(psi)
        term = quantum_broadening_term(Q)
        cell = Q.dx * Q.dp
        l1 = float(np.sum(np.abs(term)) * cell)
        rel_l2 = float(np.sqrt(np.sum(term**2)) / np.sqrt(np.sum(Q.f**2)))
        rows.append({"hbar": hbar, "l1": l1, "relative_l2": rel_l2})
    hb = [r["hbar"] for r in rows]
    return {
        "rows": rows,
        "slope_l1": fitted_order(hb, [r["l1"] for r in rows]),
        "slope_relative_l2": fitted_order(hb, [r["relative_l2"] for r in rows]),
    }
