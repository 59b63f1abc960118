"""Uniform tensor-product grids, finite-difference calculus and quadrature.

Node layers are counted from the edge of the box:

* layer 0 is the outermost node ring,
* the *interior* is everything except layer 0; Hessians and gradients are
  evaluated there with central stencils,
* the *core* is everything except layers 0 and 1; it holds the degrees of
  freedom of a path and the nodes where residuals are measured.

Layers 0 and 1 are pinned data: stencils read them, optimizers never move
them.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Uniform grid on a box in R^n, n in {1, 2}."""

    dim: int
    points: tuple[int, ...]
    box: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(int(p) for p in self.points))
        object.__setattr__(
            self, "box", tuple((float(a), float(b)) for a, b in self.box)
        )
        if self.dim not in (1, 2):
            raise ValueError(f"grid dimension must be 1 or 2, got {self.dim}")
        if len(self.points) != self.dim or len(self.box) != self.dim:
            raise ValueError("points and box must have one entry per axis")
        for p in self.points:
            if p < 5:
                raise ValueError(f"need at least 5 points per axis, got {p}")
        for a, b in self.box:
            if not (np.isfinite(a) and np.isfinite(b) and b > a):
                raise ValueError(f"invalid interval [{a}, {b}]")

    @classmethod
    def uniform(cls, dim: int, points: int, lo: float, hi: float) -> Grid:
        return cls(dim, (points,) * dim, ((lo, hi),) * dim)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @cached_property
    def spacing(self) -> tuple[float, ...]:
        return tuple((b - a) / (p - 1) for (a, b), p in zip(self.box, self.points))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(
            a + np.arange(p) * h
            for (a, _), p, h in zip(self.box, self.points, self.spacing)
        )

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays of full grid shape (``ij`` indexing)."""
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def interior(self) -> tuple[slice, ...]:
        return (slice(1, -1),) * self.dim

    @property
    def core(self) -> tuple[slice, ...]:
        return (slice(2, -2),) * self.dim

    @property
    def interior_shape(self) -> tuple[int, ...]:
        return tuple(p - 2 for p in self.points)

    @property
    def core_shape(self) -> tuple[int, ...]:
        return tuple(p - 4 for p in self.points)

    @cached_property
    def core_mask(self) -> np.ndarray:
        mask = np.zeros(self.points, dtype=bool)
        mask[self.core] = True
        return mask

    def sample(self, func) -> ScalarField:
        """Evaluate ``func(*coords)`` on every node."""
        return ScalarField(self, np.asarray(func(*self.coords), dtype=float))

    def as_dict(self) -> dict:
        return {"dim": self.dim, "points": list(self.points),
                "box": [list(b) for b in self.box]}


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.size != int(np.prod(self.grid.points)):
            raise ValueError(
                f"field has {values.size} values, grid has {np.prod(self.grid.points)}"
            )
        values = values.reshape(self.grid.points)
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __add__(self, other):
        if isinstance(other, ScalarField):
            _same_grid(self, other)
            return ScalarField(self.grid, self.values + other.values)
        return ScalarField(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            _same_grid(self, other)
            return ScalarField(self.grid, self.values - other.values)
        return ScalarField(self.grid, self.values - other)

    def __mul__(self, other):
        if isinstance(other, ScalarField):
            _same_grid(self, other)
            return ScalarField(self.grid, self.values * other.values)
        return ScalarField(self.grid, self.values * other)

    __rmul__ = __mul__
    __radd__ = __add__


@dataclass(frozen=True, eq=False)
class VectorField:
    """Per-interior-node vectors; ``values`` has shape ``interior_shape + (n,)``."""

    grid: Grid
    values: np.ndarray


@dataclass(frozen=True, eq=False)
class HessField:
    """Per-interior-node symmetric matrices, shape ``interior_shape + (n, n)``."""

    grid: Grid
    values: np.ndarray

    def min_eigenvalue(self) -> np.ndarray:
        return hess_min_eig(hess_components(self.values))


@dataclass(frozen=True)
class TimeAxis:
    steps: int

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 2:
            raise ValueError(f"need at least 2 time steps, got {self.steps}")

    @property
    def tau(self) -> float:
        return 1.0 / self.steps

    @property
    def knots(self) -> np.ndarray:
        return np.arange(self.steps + 1) / self.steps


class EndpointDerivativeError(IndexError):
    """Time derivative requested at t=0 or t=1."""


def _same_grid(*fields) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise ValueError("fields live on different grids")
    return grid


# Array kernels. All take full-grid arrays (optionally with leading batch
# axes) and return interior-node arrays.

def grad_arrays(f: np.ndarray, spacing: Sequence[float]) -> tuple[np.ndarray, ...]:
    n = len(spacing)
    lead = (Ellipsis,)
    out = []
    for ax, h in enumerate(spacing):
        hi = list((slice(1, -1),) * n)
        lo = list((slice(1, -1),) * n)
        hi[ax] = slice(2, None)
        lo[ax] = slice(None, -2)
        out.append((f[lead + tuple(hi)] - f[lead + tuple(lo)]) / (2 * h))
    return tuple(out)


def hess_arrays(f: np.ndarray, spacing: Sequence[float]) -> tuple[np.ndarray, ...]:
    """Second differences at interior nodes.

    n=1 returns ``(fxx,)``; n=2 returns ``(fxx, fxy, fyy)``.
    """
    if len(spacing) == 1:
        (h,) = spacing
        return ((f[..., 2:] - 2 * f[..., 1:-1] + f[..., :-2]) / h**2,)
    hx, hy = spacing
    fxx = (f[..., 2:, 1:-1] - 2 * f[..., 1:-1, 1:-1] + f[..., :-2, 1:-1]) / hx**2
    fyy = (f[..., 1:-1, 2:] - 2 * f[..., 1:-1, 1:-1] + f[..., 1:-1, :-2]) / hy**2
    fxy = (f[..., 2:, 2:] - f[..., 2:, :-2] - f[..., :-2, 2:] + f[..., :-2, :-2]) / (
        4 * hx * hy
    )
    return (fxx, fxy, fyy)


def hess_adjoint(parts: Sequence[np.ndarray], spacing: Sequence[float]) -> np.ndarray:
    """Transpose of :func:`hess_arrays`.

    ``parts`` are sensitivities with respect to each returned component, on
    interior nodes; the result is the sensitivity with respect to the
    full-grid input.
    """
    if len(spacing) == 1:
        (h,) = spacing
        (g,) = parts
        g = g / h**2
        out = np.zeros(g.shape[:-1] + (g.shape[-1] + 2,))
        out[..., 2:] += g
        out[..., 1:-1] -= 2 * g
        out[..., :-2] += g
        return out
    hx, hy = spacing
    gxx, gxy, gyy = parts
    shape = gxx.shape[:-2] + (gxx.shape[-2] + 2, gxx.shape[-1] + 2)
    out = np.zeros(shape)
    a = gxx / hx**2
    out[..., 2:, 1:-1] += a
    out[..., 1:-1, 1:-1] -= 2 * a
    out[..., :-2, 1:-1] += a
    c = gyy / hy**2
    out[..., 1:-1, 2:] += c
    out[..., 1:-1, 1:-1] -= 2 * c
    out[..., 1:-1, :-2] += c
    b = gxy / (4 * hx * hy)
    out[..., 2:, 2:] += b
    out[..., 2:, :-2] -= b
    out[..., :-2, 2:] -= b
    out[..., :-2, :-2] += b
    return out


def hess_matrix(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Stack component arrays into ``(..., n, n)`` symmetric matrices."""
    if len(parts) == 1:
        return parts[0][..., None, None]
    fxx, fxy, fyy = parts
    row0 = np.stack([fxx, fxy], axis=-1)
    row1 = np.stack([fxy, fyy], axis=-1)
    return np.stack([row0, row1], axis=-2)


def hess_components(mat: np.ndarray) -> tuple[np.ndarray, ...]:
    if mat.shape[-1] == 1:
        return (mat[..., 0, 0],)
    return (mat[..., 0, 0], mat[..., 0, 1], mat[..., 1, 1])


def hess_min_eig(parts: Sequence[np.ndarray]) -> np.ndarray:
    if len(parts) == 1:
        return parts[0]
    a, b, c = parts
    return 0.5 * (a + c) - np.sqrt(0.25 * (a - c) ** 2 + b**2)


# Field-level operations.

def gradient_fd(f: ScalarField) -> VectorField:
    """Central-difference gradient at interior nodes."""
    parts = grad_arrays(f.values, f.grid.spacing)
    return VectorField(f.grid, np.stack(parts, axis=-1))


def hessian_fd(f: ScalarField) -> HessField:
    """Second-difference Hessian at interior nodes.

    Diagonal entries use the 3-point stencil, the mixed entry the 4-point
    cross stencil, so the matrices are symmetric by construction.
    """
    return HessField(f.grid, hess_matrix(hess_arrays(f.values, f.grid.spacing)))


def integrate_array(values: np.ndarray, grid: Grid, support: str = "interior") -> float:
    """Trapezoid rule on raw arrays.

    ``support="full"`` takes a full-grid array. ``support="interior"`` takes
    either a full-grid or an interior-shaped array and integrates it with the
    boundary layer set to zero, which leaves every interior node with the
    full cell weight.
    """
    values = np.asarray(values, dtype=float)
    axes = tuple(range(-grid.dim, 0))
    if support == "full":
        if values.shape[-grid.dim:] != grid.shape:
            raise ValueError("full-support integration needs a full-grid array")
        w = np.ones(grid.shape)
        for ax in range(grid.dim):
            for end in (0, -1):
                idx = [slice(None)] * grid.dim
                idx[ax] = end
                w[tuple(idx)] *= 0.5
        values = values * w
    elif support == "interior":
        if values.shape[-grid.dim:] == grid.shape:
            values = values[(Ellipsis,) + grid.interior]
        elif values.shape[-grid.dim:] != grid.interior_shape:
            raise ValueError("array shape matches neither the grid nor its interior")
    else:
        raise ValueError(f"unknown support {support!r}")
    total = np.sum(values, axis=axes) * grid.cell_volume
    return float(total) if np.ndim(total) == 0 else total


def integrate(f: ScalarField, support: str = "interior") -> float:
    return integrate_array(f.values, f.grid, support)


def time_derivative(path, k: int, order: int = 1) -> ScalarField:
    """Central time difference of a path at interior knot ``k``."""
    steps = path.time.steps
    if not 1 <= k <= steps - 1:
        raise EndpointDerivativeError(
            f"time derivatives exist only at knots 1..{steps - 1}, got {k}"
        )
    s = path.values
    tau = path.time.tau
    if order == 1:
        vals = (s[k + 1] - s[k - 1]) / (2 * tau)
    elif order == 2:
        vals = (s[k + 1] - 2 * s[k] + s[k - 1]) / tau**2
    else:
        raise ValueError(f"order must be 1 or 2, got {order}")
    return ScalarField(path.grid, vals)
