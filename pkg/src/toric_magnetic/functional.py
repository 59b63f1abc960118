"""Discrete energy, magnetic term and Landau-Hall functional on potential paths.

Both terms use the midpoint rule in time. On the step ``[t_k, t_{k+1}]`` the
velocity is the forward difference ``v_k = (phi_{k+1} - phi_k) / tau`` and the
potential is the average ``a_k = (phi_k + phi_{k+1}) / 2``:

    energy   = 1/2 sum_k tau int v_k^2 ma(F0 + a_k) / V
    magnetic =     sum_k tau int v_k   ma(S(v_k))  / V

with ``S(v) = F0 + v`` (derived velocity form) or ``S(v) = v`` (literal).
Spatial integrals run over interior nodes. :func:`lh_gradient` is the exact
derivative of these sums, not a discretization of a continuous formula.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .grid import Grid, ScalarField, TimeAxis, hess_adjoint, hess_arrays
from .ma_ops import (
    ConvexityError,
    ToricBackground,
    ToricPotential,
    det_parts,
    det_sensitivity,
    min_hessian_eigenvalue,
)

VELOCITY_FORMS = ("derived", "literal")


@dataclass(frozen=True)
class CouplingConfig:
    """Magnetic coupling ``lam`` and the reading of MA(phi-dot).

    ``lam=1`` is the Landau-Hall functional proper, ``lam=0`` the plain energy.
    """

    lam: float = 1.0
    velocity_form: str = "derived"

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"coupling must be finite and non-negative, got {self.lam}")
        if self.velocity_form not in VELOCITY_FORMS:
            raise ValueError(f"velocity_form must be one of {VELOCITY_FORMS}")


@dataclass(frozen=True, eq=False)
class PotentialPath:
    """Time slices ``phi_0 .. phi_M`` of perturbations of the background.

    ``values`` has shape ``(M + 1,) + grid.shape`` and is read-only. The two
    outermost node layers of every slice and the endpoint slices are fixed
    data; only core nodes of interior slices are degrees of freedom.
    """

    background: ToricBackground
    time: TimeAxis
    values: np.ndarray
    check: bool = True

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        expected = (self.time.steps + 1,) + self.grid.shape
        if vals.shape != expected:
            raise ValueError(f"path values have shape {vals.shape}, expected {expected}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("path values must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        lam = self.min_eigenvalues()
        bad = lam[[0, -1]] if not self.check else lam
        if not np.all(bad > 0):
            raise ConvexityError(
                f"path slice fails strict convexity (min eigenvalue {bad.min():.3g})"
            )

    @property
    def grid(self) -> Grid:
        return self.background.grid

    @property
    def steps(self) -> int:
        return self.time.steps

    def slice(self, k: int) -> ScalarField:
        return ScalarField(self.grid, self.values[k])

    @property
    def slices(self) -> list[ScalarField]:
        return [self.slice(k) for k in range(self.steps + 1)]

    def potential(self, k: int) -> ToricPotential:
        return ToricPotential(self.background, self.slice(k))

    def min_eigenvalues(self) -> np.ndarray:
        """Smallest Hessian eigenvalue of ``F0 + phi_k`` for each slice."""
        lam = min_hessian_eigenvalue(self.background.F0.values + self.values,
                                     self.grid.spacing)
        return lam.reshape(self.steps + 1, -1).min(axis=1)

    def with_values(self, values: np.ndarray, check: bool = True) -> PotentialPath:
        return PotentialPath(self.background, self.time, values, check=check)

    @classmethod
    def linear(cls, phi0: ToricPotential, phi1: ToricPotential,
               time: TimeAxis) -> PotentialPath:
        """Straight-line interpolation ``(1 - t) phi0 + t phi1``."""
        if phi0.background is not phi1.background and phi0.grid != phi1.grid:
            raise ValueError("endpoints live on different grids")
        t = time.knots.reshape((-1,) + (1,) * phi0.grid.dim)
        vals = (1 - t) * phi0.phi.values + t * phi1.phi.values
        vals[0] = phi0.phi.values
        vals[-1] = phi1.phi.values
        return cls(phi0.background, time, vals)

    @classmethod
    def constant(cls, phi: ToricPotential, time: TimeAxis) -> PotentialPath:
        vals = np.broadcast_to(phi.phi.values, (time.steps + 1,) + phi.grid.shape)
        return cls(phi.background, time, vals.copy())


def free_mask(path: PotentialPath) -> np.ndarray:
    """Boolean mask of the degrees of freedom, shaped like ``path.values``."""
    mask = np.zeros(path.values.shape, dtype=bool)
    mask[1:-1] = path.grid.core_mask
    return mask


def _steps(path: PotentialPath):
    vals = path.values
    tau = path.time.tau
    return 0.5 * (vals[1:] + vals[:-1]), (vals[1:] - vals[:-1]) / tau


def _energy_parts(path: PotentialPath, grad: bool):
    grid = path.grid
    bg = path.background
    n = grid.dim
    tau, w, V = path.time.tau, grid.cell_volume, bg.V
    a, v = _steps(path)
    hp = hess_arrays(bg.F0.values + a, grid.spacing)
    m = factorial(n) * det_parts(hp)
    vi = v[(slice(None),) + grid.interior]
    value = 0.5 * tau * w * float(np.sum(vi**2 * m)) / V
    if not grad:
        return value, None, None
    dv = np.zeros_like(v)
    dv[(slice(None),) + grid.interior] = tau * w * vi * m / V
    dm = factorial(n) * 0.5 * tau * w * vi**2 / V
    da = hess_adjoint([dm * s for s in det_sensitivity(hp)], grid.spacing)
    return value, da, dv


def _slot_array(path: PotentialPath, v: np.ndarray, velocity_form: str) -> np.ndarray:
    if velocity_form == "derived":
        return path.background.F0.values + v
    return v


def _magnetic_parts(path: PotentialPath, velocity_form: str, grad: bool):
    grid = path.grid
    n = grid.dim
    tau, w, V = path.time.tau, grid.cell_volume, path.background.V
    _, v = _steps(path)
    hs = hess_arrays(_slot_array(path, v, velocity_form), grid.spacing)
    ms = factorial(n) * det_parts(hs)
    vi = v[(slice(None),) + grid.interior]
    value = tau * w * float(np.sum(vi * ms)) / V
    if not grad:
        return value, None
    dv = hess_adjoint(
        [factorial(n) * tau * w * vi / V * s for s in det_sensitivity(hs)], grid.spacing
    )
    dv[(slice(None),) + grid.interior] += tau * w * ms / V
    return value, dv


def energy(path: PotentialPath) -> float:
    """Discrete ``1/2 int_0^1 int phi-dot^2 MA(phi) dt``."""
    return _energy_parts(path, grad=False)[0]


def magnetic_term(path: PotentialPath, cfg: CouplingConfig) -> float:
    """Discrete ``int_0^1 int phi-dot MA(phi-dot) dt`` (without the coupling)."""
    return _magnetic_parts(path, cfg.velocity_form, grad=False)[0]


def lh(path: PotentialPath, cfg: CouplingConfig) -> float:
    value = energy(path)
    if cfg.lam != 0:
        value += cfg.lam * magnetic_term(path, cfg)
    return value


def lh_and_gradient(path: PotentialPath, cfg: CouplingConfig) -> tuple[float, np.ndarray]:
    value, da, dv = _energy_parts(path, grad=True)
    if cfg.lam != 0:
        b, dvb = _magnetic_parts(path, cfg.velocity_form, grad=True)
        value += cfg.lam * b
        dv = dv + cfg.lam * dvb
    tau = path.time.tau
    g = np.zeros(path.values.shape)
    g[1:] += 0.5 * da + dv / tau
    g[:-1] += 0.5 * da - dv / tau
    g[~free_mask(path)] = 0.0
    return value, g


def lh_gradient(path: PotentialPath, cfg: CouplingConfig) -> np.ndarray:
    """Exact gradient of :func:`lh` with respect to every node of every slice.

    Entries on endpoint slices and on the two pinned node layers are zero.
    """
    return lh_and_gradient(path, cfg)[1]


def velocity_min_eigenvalues(path: PotentialPath, velocity_form: str) -> np.ndarray:
    """Smallest Hessian eigenvalue of the MA(phi-dot) slot on each time step.

    Negative entries mark steps where the magnetic density is evaluated on a
    non-convex function.
    """
    _, v = _steps(path)
    lam = min_hessian_eigenvalue(_slot_array(path, v, velocity_form), path.grid.spacing)
    return lam.reshape(path.steps, -1).min(axis=1)


# Finite-difference verification.

@dataclass(frozen=True)
class GradCheckRow:
    direction_index: int
    analytic: float
    numeric: float
    rel_error: float

    def passed(self, rtol: float = 1e-5, atol: float = 1e-10) -> bool:
        return self.rel_error <= rtol or abs(self.analytic - self.numeric) <= atol


def random_direction(path: PotentialPath, rng: np.random.Generator,
                     modes: int = 4) -> np.ndarray:
    """Smooth random variation supported on the free degrees of freedom.

    A sum of ``modes`` products of random combinations of the two lowest time
    harmonics with ``sin^2`` bumps, phase-shifted cosines in space, that
    vanish on the pinned layers. Random phases keep the variation from being
    orthogonal to the gradient of a symmetric path. Normalized to unit sup
    norm.
    """
    grid = path.grid
    t = path.time.knots.reshape((-1,) + (1,) * grid.dim)
    out = np.zeros(path.values.shape)
    for _ in range(modes):
        spatial = np.ones(grid.shape)
        for c, (a, b), h in zip(grid.coords, grid.box, grid.spacing):
            s = (c - a - h) / (b - a - 2 * h)
            k, phase = rng.integers(0, 3), rng.uniform(0, 2 * np.pi)
            spatial = spatial * np.sin(np.pi * s) ** 2 * np.cos(np.pi * k * s + phase)
        w1, w2 = rng.standard_normal(2)
        out += (w1 * np.sin(np.pi * t) + w2 * np.sin(2 * np.pi * t)) * spatial
    out[~free_mask(path)] = 0.0
    scale = np.max(np.abs(out))
    return out / scale if scale > 0 else out


def gradient_check(path: PotentialPath, cfg: CouplingConfig, directions: int = 20,
                   seed: int = 0, eps: float = 1e-5, order: int = 4) -> list[GradCheckRow]:
    """Compare ``<lh_gradient, d>`` with central differences of :func:`lh`.

    ``order=2`` is the two-point stencil, whose ``O(eps^2)`` error is set by
    the third derivative of lh and swamps small directional derivatives near
    critical paths. ``order=4`` uses ``lh(+-eps d)`` and ``lh(+-2 eps d)``;
    for n <= 2 the discrete lh is a polynomial of degree at most 4 along any
    line, so that stencil is exact up to rounding. ``rel_error`` is
    ``|a - b| / max(|a|, |b|)``, or 0 when both vanish.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    rng = np.random.default_rng(seed)
    grad = lh_gradient(path, cfg)

    def f(d, s):
        return lh(path.with_values(path.values + s * d, check=False), cfg)

    rows = []
    for i in range(directions):
        d = random_direction(path, rng)
        if order == 2:
            numeric = (f(d, eps) - f(d, -eps)) / (2 * eps)
        else:
            numeric = (8 * (f(d, eps) - f(d, -eps)) - (f(d, 2 * eps) - f(d, -2 * eps))) / (12 * eps)
        analytic = float(np.sum(grad * d))
        scale = max(abs(analytic), abs(numeric))
        rel = abs(analytic - numeric) / scale if scale > 0 else 0.0
        rows.append(GradCheckRow(i, analytic, numeric, rel))
    return rows
