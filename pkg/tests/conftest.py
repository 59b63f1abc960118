from __future__ import annotations

import numpy as np
import pytest

from toric_magnetic import PotentialPath, ToricBackground, ToricPotential
from toric_magnetic.grid import Grid, ScalarField, TimeAxis


def quadratic_setup(n: int, points: int, steps: int, lo: float = -0.5, hi: float = 0.5):
    grid = Grid.uniform(n, points, lo, hi)
    return grid, ToricBackground.quadratic(grid), TimeAxis(steps)


def potential(bg: ToricBackground, func) -> ToricPotential:
    return ToricPotential(bg, bg.grid.sample(func))


def shift_path(bg: ToricBackground, time: TimeAxis, c: float, base=None) -> PotentialPath:
    """``phi_k = base + t_k c`` with a spatially constant ``c``."""
    b = np.zeros(bg.grid.shape) if base is None else base
    t = time.knots.reshape((-1,) + (1,) * bg.grid.dim)
    return PotentialPath(bg, time, b + t * c)


def bumpy_path(bg: ToricBackground, time: TimeAxis, amp: float = 0.5, seed: int = 0):
    """Quartic endpoints joined by a line plus a wiggle vanishing on the box edge."""
    grid = bg.grid
    r2 = sum(c**2 for c in grid.coords)
    phi0 = ToricPotential(bg, grid.sample(lambda *x: 0 * x[0]))
    phi1 = ToricPotential(bg, ScalarField(grid, amp * r2**2))
    path = PotentialPath.linear(phi0, phi1, time)
    rng = np.random.default_rng(seed)
    t = time.knots.reshape((-1,) + (1,) * grid.dim)
    bump = np.prod([np.cos(np.pi * c) ** 4 for c in grid.coords], axis=0)
    wiggle = 0.01 * rng.uniform(0.5, 1.0) * np.sin(np.pi * t) * bump
    return path.with_values(path.values + wiggle)


@pytest.fixture
def grid1():
    return quadratic_setup(1, 33, 8)


@pytest.fixture
def grid2():
    return quadratic_setup(2, 17, 8)


# Acceptance lines, printed in the terminal summary.

ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    ACCEPTANCE[criterion] = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
