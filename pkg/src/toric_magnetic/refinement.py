"""Helpers for mesh-refinement studies on nested grids.

Refining by 2 in space and time keeps every coarse node and knot, so norms
can be compared on a fixed point set. Taking the maximum over all nodes of
each mesh instead lets the location of the maximum drift toward the corner
of the box, which biases the observed order.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .grid import Grid, TimeAxis
from .residuals import ResidualReport


def observed_orders(errors: Sequence[float], ratio: float = 2.0) -> np.ndarray:
    """``log(e_i / e_{i+1}) / log(ratio)`` for consecutive meshes."""
    e = np.asarray(errors, dtype=float)
    if e.ndim != 1 or len(e) < 2:
        raise ValueError("need at least two error values")
    if np.any(e <= 0):
        raise ValueError("errors must be positive to define an order")
    return np.log(e[:-1] / e[1:]) / np.log(ratio)


def refinement_factors(coarse: Grid, coarse_time: TimeAxis, fine: Grid,
                       fine_time: TimeAxis) -> tuple[tuple[int, ...], int]:
    if coarse.dim != fine.dim or coarse.box != fine.box:
        raise ValueError("nested meshes must share dimension and box")
    space = []
    for pc, pf in zip(coarse.points, fine.points):
        r, rem = divmod(pf - 1, pc - 1)
        if rem or r < 1:
            raise ValueError(f"{pf} points do not refine {pc} points")
        space.append(r)
    s, rem = divmod(fine_time.steps, coarse_time.steps)
    if rem or s < 1:
        raise ValueError(f"{fine_time.steps} steps do not refine {coarse_time.steps} steps")
    return tuple(space), s


def on_coarse_nodes(report: ResidualReport, coarse: Grid, coarse_time: TimeAxis) -> np.ndarray:
    """Residual values at the interior knots and core nodes of a coarser mesh.

    Returns an array shaped like a ``ResidualReport.fields`` of the coarse
    mesh.
    """
    space, s = refinement_factors(coarse, coarse_time, report.grid, report.time)
    rows = np.arange(1, coarse_time.steps) * s - 1
    idx = [rows]
    for pc, r in zip(coarse.points, space):
        idx.append(np.arange(2, pc - 2) * r - 2)
    return report.fields[np.ix_(*idx)]


def nested_linf(report: ResidualReport, coarse: Grid, coarse_time: TimeAxis) -> float:
    return float(np.max(np.abs(on_coarse_nodes(report, coarse, coarse_time))))
