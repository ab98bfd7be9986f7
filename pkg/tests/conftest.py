from __future__ import annotations

import numpy as np
import pytest

from quantkin.grids import make_grids
from quantkin.schrodinger import PolynomialPotential, analytic_state, split_step_evolve


def evolved_triplet(kind, potential, n, dt, t_eval=0.5, L=16.0, **params):
    """Three consecutive split-step snapshots centred at ``t_eval``."""
    xg, _ = make_grids(n, -L, L)
    psi = analytic_state(kind, xg, **params)
    steps = int(round(t_eval / dt)) - 1
    if steps > 0:
        psi = split_step_evolve(psi, potential, dt, steps, steps)[-1]
    return split_step_evolve(psi, potential, dt, 2, 1)


def exact_triplet(kind, n, dt, t_eval=0.5, L=16.0, **params):
    """Closed-form states at ``t_eval - dt, t_eval, t_eval + dt``."""
    xg, _ = make_grids(n, -L, L)
    return [analytic_state(kind, xg, t=t_eval + k * dt, **params) for k in (-1, 0, 1)]


@pytest.fixture
def grid256():
    return make_grids(256, -16.0, 16.0)


@pytest.fixture
def harmonic():
    return PolynomialPotential.harmonic()


@pytest.fixture
def free():
    return PolynomialPotential()


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, ok: bool, text: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {text}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
