"""Refinement tables on the quadratic family x^2 / 2 -> x^2 / (2 - t).

Prints, per mesh, the solver error against the closed form at lambda = 0,
the magnetic residuals after continuation to lambda = 1, the HCMA residual of
the closed form and of the straight line, and the energy-profile deviation of
a non-quadratic dual-interpolation geodesic. Writes runs/refinement.csv.
"""

from __future__ import annotations

import csv
import sys
from pathlib import Path

import numpy as np

from toric_magnetic import (
    PotentialPath,
    SolverConfig,
    ToricBackground as Background,
    ToricPotential as Potential,
    dual_interpolation_geodesic,
    energy_profile,
    hcma_residual,
    quadratic_geodesic,
    solve,
)
from toric_magnetic.grid import Grid, TimeAxis
from toric_magnetic.refinement import nested_linf, observed_orders

MESHES = ((33, 16), (65, 32), (129, 64))
COLUMNS = ("points", "steps", "solve_error", "magnetic_derived", "magnetic_literal",
           "hcma_geodesic", "hcma_linear", "energy_deviation")


def setup(points: int, steps: int, lo: float = -0.5, hi: float = 0.5):
    grid = Grid.uniform(1, points, lo, hi)
    bg = Background.quadratic(grid)
    return grid, bg, TimeAxis(steps)


def row(points: int, steps: int, coarse) -> dict:
    grid, bg, time = setup(points, steps)
    p0 = Potential(bg, grid.sample(lambda x: 0 * x))
    p1 = Potential(bg, grid.sample(lambda x: x**2 / 2))

    def boundary(lam):
        return quadratic_geodesic(bg, time, 1.0, 2.0, lam)

    flat = solve(p0, p1, time, SolverConfig(), boundary=boundary)
    err = np.abs(flat.path.values - boundary(0.0).values).max()
    mag = solve(p0, p1, time, SolverConfig(lambda_schedule=(0, 0.25, 0.5, 1)),
                boundary=boundary)
    geo = nested_linf(hcma_residual(boundary(0.0)), *coarse)
    lin = nested_linf(hcma_residual(PotentialPath.linear(p0, p1, time)), *coarse)
    _, dbg, dtime = setup(points, steps, -1.0, 1.0)
    duals = [(lambda y: y**2 / 2, lambda y: y),
             (lambda y: y**2 / 2 + 0.1 * (y**2 - 1) ** 2,
              lambda y: y + 0.4 * y * (y**2 - 1))]
    e = energy_profile(dual_interpolation_geodesic(dbg, dtime, duals, (-1.0, 1.0)))
    return {"points": points, "steps": steps, "solve_error": err,
            "magnetic_derived": mag.residuals["magnetic_derived"].max_linf,
            "magnetic_literal": mag.residuals["magnetic_literal"].max_linf,
            "hcma_geodesic": geo, "hcma_linear": lin,
            "energy_deviation": np.abs(e - e.mean()).max()}


def main(out: Path) -> None:
    grid, _, time = setup(*MESHES[0])
    rows = [row(n, m, (grid, time)) for n, m in MESHES]
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "refinement.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, COLUMNS)
        w.writeheader()
        w.writerows({k: repr(v) if isinstance(v, float) else v for k, v in r.items()}
                    for r in rows)
    print(" ".join(f"{c:>16s}" for c in COLUMNS))
    for r in rows:
        print(" ".join(f"{r[c]:>16.6g}" for c in COLUMNS))
    for c in COLUMNS[2:]:
        if c != "hcma_linear":
            print(f"order {c:>18s}: {np.round(observed_orders([r[c] for r in rows]), 3)}")


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path("runs"))
