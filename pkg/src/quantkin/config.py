"""Scenario configuration: a small YAML document validated field by field.

Example::

    scenario:
      kind: ho_coherent
    grid: {n: 256, x_min: -16, x_max: 16}
    physics: {hbar: 1, mass: 1, sigma: 1, p0: 0, x0: 1, omega: 1}
    evolution: {dt: 0.001, steps: 500, stride: 100}
    masks: {rho_min_frac: 1.0e-6}
    checks: [normalization, marginals, q_transport, ehrenfest]
    output: {dir: out}

Every section is optional except ``scenario``.  Unknown keys are rejected.
"""
from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .grids import GridError, SpatialGrid
from .schrodinger import PolynomialPotential

__all__ = ["ConfigError", "ScenarioConfig", "load_config", "parse_config", "SCENARIO_KINDS", "OUTPUT_ENV"]

SCENARIO_KINDS = ("free_gaussian", "ho_ground", "ho_coherent", "two_packet", "custom_polynomial")
OUTPUT_ENV = "QUANTKIN_OUTPUT_DIR"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass(frozen=True)
class GridConfig:
    n: int = 256
    x_min: float = -16.0
    x_max: float = 16.0


@dataclass(frozen=True)
class PhysicsConfig:
    hbar: float = 1.0
    mass: float = 1.0
    sigma: float = 1.0
    p0: float = 0.0
    x0: float = 0.0
    omega: float = 1.0
    separation: float = 6.0
    relative_phase: float = 0.0
    potential: tuple[float, ...] | None = None


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float = 1e-3
    steps: int = 200
    stride: int = 50


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    grid: GridConfig = field(default_factory=GridConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    rho_min_frac: float = 1e-6
    checks: tuple[str, ...] = ()
    output_dir: str = "out"

    def potential(self) -> PolynomialPotential:
        ph = self.physics
        if ph.potential is not None:
            return PolynomialPotential(ph.potential)
        if self.kind in ("ho_ground", "ho_coherent"):
            return PolynomialPotential.harmonic(ph.omega, ph.mass)
        return PolynomialPotential()

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["physics"]["potential"] is not None:
            d["physics"]["potential"] = list(d["physics"]["potential"])
        d["checks"] = list(d["checks"])
        return d

    def with_output_dir(self, path: str) -> "ScenarioConfig":
        return ScenarioConfig(**{**self.__dict__, "output_dir": str(path)})


_SECTIONS = {"scenario", "grid", "physics", "evolution", "masks", "checks", "output"}


def _mapping(raw, name: str) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected a mapping, got {type(raw).__name__}")
    return raw


def _reject_unknown(raw: dict, allowed, name: str) -> None:
    extra = sorted(set(raw) - set(allowed))
    if extra:
        raise ConfigError(f"{name}: unknown key(s) {', '.join(map(str, extra))}")


def _number(raw: dict, key: str, section: str, default: float, positive: bool = False) -> float:
    value = raw.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{section}.{key}: expected a finite number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(f"{section}.{key}: must be positive, got {value!r}")
    return float(value)


def _integer(raw: dict, key: str, section: str, default: int, minimum: int) -> int:
    value = raw.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{section}.{key}: expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{section}.{key}: must be >= {minimum}, got {value}")
    return value


def parse_config(raw, known_checks=None) -> ScenarioConfig:
    """Validate a decoded YAML document."""
    raw = _mapping(raw, "config")
    _reject_unknown(raw, _SECTIONS, "config")

    scen = _mapping(raw.get("scenario"), "scenario")
    _reject_unknown(scen, {"kind"}, "scenario")
    kind = scen.get("kind")
    if kind not in SCENARIO_KINDS:
        raise ConfigError(f"scenario.kind: expected one of {', '.join(SCENARIO_KINDS)}, got {kind!r}")

    g = _mapping(raw.get("grid"), "grid")
    _reject_unknown(g, {"n", "x_min", "x_max"}, "grid")
    grid = GridConfig(
        _integer(g, "n", "grid", GridConfig.n, 1),
        _number(g, "x_min", "grid", GridConfig.x_min),
        _number(g, "x_max", "grid", GridConfig.x_max),
    )
    try:
        SpatialGrid(grid.n, grid.x_min, grid.x_max)
    except GridError as exc:
        field_name = "grid.n" if str(exc).startswith("invalid-n") else "grid.x_min/x_max"
        raise ConfigError(f"{field_name}: {exc}") from None

    p = _mapping(raw.get("physics"), "physics")
    _reject_unknown(p, set(PhysicsConfig.__dataclass_fields__), "physics")
    coeffs = p.get("potential")
    if coeffs is not None:
        if not isinstance(coeffs, list) or not coeffs:
            raise ConfigError("physics.potential: expected a non-empty list of coefficients")
        if len(coeffs) > 5:
            raise ConfigError(f"physics.potential: degree-too-high, at most 5 coefficients, got {len(coeffs)}")
        for c in coeffs:
            if isinstance(c, bool) or not isinstance(c, (int, float)) or not math.isfinite(c):
                raise ConfigError(f"physics.potential: coefficients must be finite numbers, got {c!r}")
        coeffs = tuple(float(c) for c in coeffs)
    if kind == "custom_polynomial" and coeffs is None:
        raise ConfigError("physics.potential: required for scenario.kind custom_polynomial")
    physics = PhysicsConfig(
        _number(p, "hbar", "physics", 1.0, positive=True),
        _number(p, "mass", "physics", 1.0, positive=True),
        _number(p, "sigma", "physics", 1.0, positive=True),
        _number(p, "p0", "physics", 0.0),
        _number(p, "x0", "physics", 0.0),
        _number(p, "omega", "physics", 1.0, positive=True),
        _number(p, "separation", "physics", 6.0, positive=True),
        _number(p, "relative_phase", "physics", 0.0),
        coeffs,
    )

    e = _mapping(raw.get("evolution"), "evolution")
    _reject_unknown(e, {"dt", "steps", "stride"}, "evolution")
    evolution = EvolutionConfig(
        _number(e, "dt", "evolution", EvolutionConfig.dt, positive=True),
        _integer(e, "steps", "evolution", EvolutionConfig.steps, 0),
        _integer(e, "stride", "evolution", EvolutionConfig.stride, 1),
    )

    m = _mapping(raw.get("masks"), "masks")
    _reject_unknown(m, {"rho_min_frac"}, "masks")
    rho_min_frac = _number(m, "rho_min_frac", "masks", 1e-6, positive=True)
    if rho_min_frac >= 1:
        raise ConfigError(f"masks.rho_min_frac: must be < 1, got {rho_min_frac}")

    checks = raw.get("checks", [])
    if checks is None:
        checks = []
    if not isinstance(checks, list) or not all(isinstance(c, str) for c in checks):
        raise ConfigError("checks: expected a list of check ids")
    if known_checks is not None:
        unknown = [c for c in checks if c not in known_checks]
        if unknown:
            raise ConfigError(f"checks: unknown check id(s) {', '.join(unknown)}")

    o = _mapping(raw.get("output"), "output")
    _reject_unknown(o, {"dir"}, "output")
    out_dir = o.get("dir", "out")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError(f"output.dir: expected a non-empty string, got {out_dir!r}")

    return ScenarioConfig(kind, grid, physics, evolution, rho_min_frac, tuple(checks), out_dir)


def load_config(path, known_checks=None) -> ScenarioConfig:
    """Read and validate a YAML file.

    The output directory may be overridden with the ``QUANTKIN_OUTPUT_DIR``
    environment variable; nothing else is read from the environment.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: not valid YAML: {exc}") from None
    cfg = parse_config(raw, known_checks)
    env_dir = os.environ.get(OUTPUT_ENV)
    if env_dir:
        cfg = cfg.with_output_dir(env_dir)
    return cfg
