"""Phase-space distribution built from a wave function, with numerical checks
of its kinetic and hydrodynamic equations."""

__version__ = "0.1.0"
