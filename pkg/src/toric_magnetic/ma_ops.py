"""Real Monge-Ampere densities, mixed discriminants and the Legendre transform.

Wedge products of ``dd^c``-forms of torus-invariant functions become
determinant expressions in the log chart:

    dd^c u_1 ^ ... ^ dd^c u_n      ->  n! md(Hess u_1, ..., Hess u_n)
    du ^ d^c v ^ (dd^c w)^(n-1)    ->  (n-1)! grad(u)^T Cof(Hess w) grad(v)

The first normalization makes the diagonal case equal ``n! det Hess``; the
second is the one for which ``int pairing(u, u) = -int u dd^c u ^ ...``
holds after summation by parts.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from math import factorial
from typing import Sequence

import numpy as np

from .grid import (
    Grid,
    ScalarField,
    _same_grid,
    grad_arrays,
    hess_arrays,
    hess_min_eig,
    integrate_array,
)


class RangeCoverageError(ValueError):
    """The gradient range of a convex function does not cover the dual box."""


class ConvexityError(ValueError):
    """A potential fails the strict convexity requirement."""


# Component kernels on tuples of Hessian parts, (fxx,) or (fxx, fxy, fyy).

def det_parts(p: Sequence[np.ndarray]) -> np.ndarray:
    if len(p) == 1:
        return p[0]
    a, b, c = p
    return a * c - b * b


def det_sensitivity(p: Sequence[np.ndarray]) -> tuple[np.ndarray, ...]:
    """Partial derivatives of ``det`` with respect to each Hessian part.

    The mixed part appears twice in the matrix, hence the factor 2.
    """
    if len(p) == 1:
        return (np.ones_like(p[0]),)
    a, b, c = p
    return (c, -2 * b, a)


def mixed_parts(p: Sequence[np.ndarray], q: Sequence[np.ndarray]) -> np.ndarray:
    """Two-slot mixed discriminant md(P, Q) for n=2."""
    a1, b1, c1 = p
    a2, b2, c2 = q
    return 0.5 * (a1 * c2 + c1 * a2) - b1 * b2


def cof_quadratic(p: Sequence[np.ndarray], u: Sequence[np.ndarray],
                  v: Sequence[np.ndarray]) -> np.ndarray:
    """``u^T Cof(P) v`` per node; for n=1 the cofactor is 1.

    Products are grouped so that swapping ``u`` and ``v`` is exact.
    """
    if len(p) == 1:
        return u[0] * v[0]
    a, b, c = p
    return c * (u[0] * v[0]) - b * (u[0] * v[1] + u[1] * v[0]) + a * (u[1] * v[1])


def cof_trace(p: Sequence[np.ndarray], q: Sequence[np.ndarray]) -> np.ndarray:
    """``tr(Cof(P) Q)``, the derivative of det at P in direction Q."""
    if len(p) == 1:
        return q[0]
    a, b, c = p
    qa, qb, qc = q
    return c * qa - 2 * b * qb + a * qc


def ma_array(F: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
    """``n! det Hess F`` at interior nodes of a full-grid array."""
    n = len(spacing)
    return factorial(n) * det_parts(hess_arrays(F, spacing))


# Public operations.

def md(*mats) -> float:
    """Mixed discriminant normalized so that ``md(A, ..., A) = det A``."""
    mats = [np.atleast_2d(np.asarray(m, dtype=float)) for m in mats]
    n = len(mats)
    for m in mats:
        if m.shape != (n, n):
            raise ValueError(f"md with {n} slots needs {n}x{n} matrices, got {m.shape}")
    total = 0.0
    for r in range(1, n + 1):
        for subset in itertools.combinations(range(n), r):
            s = sum(mats[i] for i in subset)
            total += (-1) ** (n - r) * np.linalg.det(s)
    return total / factorial(n)


def md_stack(mats: Sequence[np.ndarray]) -> np.ndarray:
    """Vectorized :func:`md` over leading axes of ``(..., n, n)`` arrays."""
    n = len(mats)
    if any(m.shape[-2:] != (n, n) for m in mats):
        raise ValueError("slot matrices must be n x n with n equal to the slot count")
    total = np.zeros(mats[0].shape[:-2])
    for r in range(1, n + 1):
        for subset in itertools.combinations(range(n), r):
            s = sum(mats[i] for i in subset)
            total = total + (-1) ** (n - r) * np.linalg.det(s)
    return total / factorial(n)


def ma_density(F: ScalarField) -> ScalarField:
    """Real Monge-Ampere density ``n! det Hess F`` on interior nodes.

    Evaluated algebraically: a non-convex ``F`` gives a signed density.
    Boundary nodes carry zero.
    """
    out = np.zeros(F.grid.shape)
    out[F.grid.interior] = ma_array(F.values, F.grid.spacing)
    return ScalarField(F.grid, out)


def mixed_ma_density(*fields: ScalarField) -> ScalarField:
    grid = _same_grid(*fields)
    if len(fields) != grid.dim:
        raise ValueError(f"need {grid.dim} slots, got {len(fields)}")
    parts = [hess_arrays(f.values, grid.spacing) for f in fields]
    if grid.dim == 1:
        dens = parts[0][0]
    else:
        dens = 2 * mixed_parts(parts[0], parts[1])
    out = np.zeros(grid.shape)
    out[grid.interior] = dens
    return ScalarField(grid, out)


def cofactor_pairing(u: ScalarField, v: ScalarField,
                     slots: Sequence[ScalarField] = ()) -> ScalarField:
    """``(n-1)! grad(u)^T MixedCof(slots) grad(v)`` on interior nodes."""
    grid = _same_grid(u, v, *slots)
    if len(slots) != grid.dim - 1:
        raise ValueError(f"need {grid.dim - 1} slot fields, got {len(slots)}")
    gu = grad_arrays(u.values, grid.spacing)
    gv = grad_arrays(v.values, grid.spacing)
    if grid.dim == 1:
        dens = gu[0] * gv[0]
    else:
        dens = cof_quadratic(hess_arrays(slots[0].values, grid.spacing), gu, gv)
    out = np.zeros(grid.shape)
    out[grid.interior] = dens
    return ScalarField(grid, out)


def min_hessian_eigenvalue(F: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
    return hess_min_eig(hess_arrays(F, spacing))


def _legendre_values(F: np.ndarray, src: Grid, dst: Grid,
                     block: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    """Brute-force conjugate; also flags dual nodes whose maximizer is interior."""
    xs = np.stack([c.ravel() for c in src.coords], axis=-1)
    ys = np.stack([c.ravel() for c in dst.coords], axis=-1)
    f = F.ravel()
    interior = np.zeros(src.shape, dtype=bool)
    interior[src.interior] = True
    interior = interior.ravel()
    vals = np.empty(len(ys))
    inside = np.empty(len(ys), dtype=bool)
    for start in range(0, len(ys), block):
        yb = ys[start:start + block]
        obj = yb @ xs.T - f[None, :]
        idx = np.argmax(obj, axis=1)
        vals[start:start + block] = obj[np.arange(len(yb)), idx]
        inside[start:start + block] = interior[idx]
    return vals.reshape(dst.shape), inside.reshape(dst.shape)


def legendre(F: ScalarField, dual_grid: Grid, check_range: bool = True) -> ScalarField:
    """Discrete Legendre-Fenchel transform ``max_x <x, y> - F(x)`` over grid nodes.

    Raises:
        RangeCoverageError: if the maximizer for some dual node sits on the
            outermost node layer, i.e. the gradient range of ``F`` does not
            reach that node.
    """
    if dual_grid.dim != F.grid.dim:
        raise ValueError("dual grid dimension differs from the source grid")
    vals, inside = _legendre_values(F.values, F.grid, dual_grid)
    if check_range and not inside.all():
        bad = int((~inside).sum())
        raise RangeCoverageError(
            f"gradient range does not cover the dual box ({bad} dual nodes "
            "have a boundary maximizer)"
        )
    return ScalarField(dual_grid, vals)


@dataclass(frozen=True, eq=False)
class ToricBackground:
    """Strictly convex base function F0 on the log chart."""

    F0: ScalarField

    def __post_init__(self):
        lam = min_hessian_eigenvalue(self.F0.values, self.grid.spacing)
        if not np.all(lam > 0):
            raise ConvexityError(
                f"background is not strictly convex (min eigenvalue {lam.min():.3g})"
            )

    @property
    def grid(self) -> Grid:
        return self.F0.grid

    @cached_property
    def V(self) -> float:
        return integrate_array(ma_array(self.F0.values, self.grid.spacing), self.grid)

    @classmethod
    def quadratic(cls, grid: Grid) -> ToricBackground:
        """``F0 = |x|^2 / 2``."""
        return cls(grid.sample(lambda *x: 0.5 * sum(c**2 for c in x)))


@dataclass(frozen=True, eq=False)
class ToricPotential:
    """A perturbation phi with ``F0 + phi`` strictly convex."""

    background: ToricBackground
    phi: ScalarField

    def __post_init__(self):
        if self.phi.grid != self.background.grid:
            raise ValueError("potential and background live on different grids")
        lam = self.min_eigenvalue()
        if not lam > 0:
            raise ConvexityError(
                f"F0 + phi is not strictly convex (min eigenvalue {lam:.3g})"
            )

    @property
    def grid(self) -> Grid:
        return self.background.grid

    @property
    def F(self) -> ScalarField:
        return self.background.F0 + self.phi

    def min_eigenvalue(self) -> float:
        return float(min_hessian_eigenvalue(self.F.values, self.grid.spacing).min())
