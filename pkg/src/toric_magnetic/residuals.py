"""Pointwise residuals of the geodesic and magnetic geodesic equations.

Residuals are evaluated at interior knots with central time differences and
reported on core nodes, the nodes whose values a solver actually moves. For a
path ``phi`` with ``F = F0 + phi``:

    geodesic:  phi'' ma(F)/V - (n/V) (n-1)! grad(phi')^T Cof(Hess F) grad(phi')
    magnetic:  geodesic + lam (2n/V) n! md(Hess phi'', S, ..., S)
                        + lam (n(n-1)/V) n! md(Hess phi', Hess phi'', S, ...)

where primes on ``phi`` are time derivatives and ``S`` is the Hessian of the
velocity slot, ``F0 + phi'`` or ``phi'`` depending on the velocity form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .functional import CouplingConfig, PotentialPath
from .grid import Grid, TimeAxis, grad_arrays, hess_arrays, hess_matrix
from .ma_ops import cof_quadratic, cof_trace, det_parts, mixed_parts

RESIDUAL_MODES = ("dictionary", "corollary")


@dataclass(frozen=True, eq=False)
class ResidualReport:
    """Residual fields at interior knots ``1..M-1`` with their norms.

    ``fields`` has shape ``(M - 1,) + grid.core_shape``.
    """

    label: str
    grid: Grid
    time: TimeAxis
    fields: np.ndarray
    l2: np.ndarray = field(init=False)
    linf: np.ndarray = field(init=False)

    def __post_init__(self):
        f = np.asarray(self.fields, dtype=float)
        axes = tuple(range(1, f.ndim))
        object.__setattr__(self, "fields", f)
        object.__setattr__(self, "l2", np.sqrt(np.sum(f**2, axis=axes) * self.grid.cell_volume))
        object.__setattr__(self, "linf", np.max(np.abs(f), axis=axes))

    @property
    def max_l2(self) -> float:
        return float(self.l2.max())

    @property
    def max_linf(self) -> float:
        return float(self.linf.max())


@dataclass
class _Kinematics:
    F: np.ndarray       # F0 + phi_k, full grid, knots 1..M-1
    vel: np.ndarray     # central first difference, full grid
    acc: np.ndarray     # central second difference, full grid


def _kinematics(path: PotentialPath) -> _Kinematics:
    s = path.values
    tau = path.time.tau
    return _Kinematics(
        F=path.background.F0.values + s[1:-1],
        vel=(s[2:] - s[:-2]) / (2 * tau),
        acc=(s[2:] - 2 * s[1:-1] + s[:-2]) / tau**2,
    )


def _inner(a: np.ndarray, dim: int) -> np.ndarray:
    """Drop the outermost node ring of each slice.

    Maps full-grid arrays to interior nodes and interior-node arrays to
    core nodes.
    """
    return a[(slice(None),) + (slice(1, -1),) * dim]


def _parts_sum(p) -> np.ndarray:
    """Sum of all matrix entries, the scalar-sum reading."""
    if len(p) == 1:
        return p[0]
    a, b, c = p
    return a + 2 * b + c


def _geodesic_terms(path: PotentialPath, kin: _Kinematics):
    grid = path.grid
    n, V = grid.dim, path.background.V
    hF = hess_arrays(kin.F, grid.spacing)
    gv = grad_arrays(kin.vel, grid.spacing)
    lhs = _inner(kin.acc, n) * factorial(n) * det_parts(hF) / V
    pair = factorial(n - 1) * cof_quadratic(hF, gv, gv)
    return lhs, n / V * pair, hF, gv


def geodesic_residual(path: PotentialPath) -> ResidualReport:
    kin = _kinematics(path)
    lhs, rhs, _, _ = _geodesic_terms(path, kin)
    return ResidualReport("geodesic", path.grid, path.time, _inner(lhs - rhs, path.grid.dim))


def magnetic_residual(path: PotentialPath, cfg: CouplingConfig,
                      mode: str = "dictionary") -> ResidualReport:
    """Residual ``LHS - RHS`` of the magnetic geodesic equation.

    ``mode="dictionary"`` translates the wedge products with mixed
    discriminants; ``mode="corollary"`` replaces every Hessian factor by the
    sum of its entries, raised to the same power. The coupling ``lam``
    multiplies the two terms containing the Hessian of the acceleration, so
    ``lam=0`` reproduces :func:`geodesic_residual`.
    """
    if mode not in RESIDUAL_MODES:
        raise ValueError(f"mode must be one of {RESIDUAL_MODES}")
    grid = path.grid
    n, V = grid.dim, path.background.V
    kin = _kinematics(path)
    lhs, pair_term, hF, gv = _geodesic_terms(path, kin)
    slot = kin.vel + path.background.F0.values if cfg.velocity_form == "derived" else kin.vel
    hS = hess_arrays(slot, grid.spacing)
    hA = hess_arrays(kin.acc, grid.spacing)
    hV = hess_arrays(kin.vel, grid.spacing)

    if mode == "dictionary":
        rhs1 = pair_term
        t2 = factorial(n - 1) * cof_trace(hS, hA)
        t3 = 2 * mixed_parts(hV, hA) if n == 2 else np.zeros_like(t2)
    else:
        grad_sum = gv[0] ** 2 if n == 1 else (gv[0] + gv[1]) ** 2
        rhs1 = n / V * grad_sum * _parts_sum(hF) ** (n - 1)
        t2 = _parts_sum(hA) * _parts_sum(hS) ** (n - 1)
        t3 = (_parts_sum(hV) * _parts_sum(hA) * _parts_sum(hS) ** (n - 2)
              if n >= 2 else np.zeros_like(t2))

    res = lhs - rhs1
    if cfg.lam != 0:
        res = res + cfg.lam * (2 * n / V * t2 + n * (n - 1) / V * t3)
    label = f"magnetic_{cfg.velocity_form}" + ("" if mode == "dictionary" else "_corollary")
    return ResidualReport(label, grid, path.time, _inner(res, n))


def hcma_residual(path: PotentialPath) -> ResidualReport:
    """Normalized determinant of the space-time Hessian of ``F0 + phi_t``.

    The ``(n+1) x (n+1)`` matrix is assembled from the spatial Hessian, the
    mixed central-central differences and the second time difference, then
    divided pointwise by ``1 + |det Hess_x F|``.
    """
    grid = path.grid
    n = grid.dim
    kin = _kinematics(path)
    hx = hess_matrix(hess_arrays(kin.F, grid.spacing))
    mixed = np.stack(grad_arrays(kin.vel, grid.spacing), axis=-1)
    acc = _inner(kin.acc, n)
    full = np.zeros(acc.shape + (n + 1, n + 1))
    full[..., :n, :n] = hx
    full[..., :n, n] = mixed
    full[..., n, :n] = mixed
    full[..., n, n] = acc
    det = np.linalg.det(full) / (1 + np.abs(np.linalg.det(hx)))
    return ResidualReport("hcma", grid, path.time, _inner(det, n))


def energy_profile(path: PotentialPath) -> np.ndarray:
    """``int phi'^2 MA(phi)`` at each interior knot (length ``M - 1``)."""
    grid = path.grid
    n = grid.dim
    kin = _kinematics(path)
    dens = _inner(kin.vel, n) ** 2 * factorial(n) * det_parts(hess_arrays(kin.F, grid.spacing))
    axes = tuple(range(1, dens.ndim))
    return np.sum(dens, axis=axes) * grid.cell_volume / path.background.V
