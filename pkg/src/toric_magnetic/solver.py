"""Fixed-endpoint critical paths of the discrete Landau-Hall functional.

Classical toric geodesics are straight lines after a Legendre transform, which
gives three independent references for the optimizer:

* :func:`oracle_geodesic`, brute-force discrete Legendre transforms,
* :func:`quadratic_geodesic`, the closed form between ``c0|x|^2/2`` and
  ``c1|x|^2/2``,
* :func:`dual_interpolation_geodesic`, a 1-D construction from analytic dual
  potentials, solved by bisection to rounding error.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .functional import (
    VELOCITY_FORMS,
    CouplingConfig,
    PotentialPath,
    free_mask,
    lh_and_gradient,
    velocity_min_eigenvalues,
)
from .grid import Grid, ScalarField, TimeAxis, hess_arrays
from .ma_ops import (
    ToricBackground,
    ToricPotential,
    _legendre_values,
    det_parts,
    legendre,
)
from .residuals import (
    ResidualReport,
    energy_profile,
    geodesic_residual,
    hcma_residual,
    magnetic_residual,
)

log = logging.getLogger(__name__)

METHODS = ("auto", "descent", "damped-newton", "newton")


class SolverPreconditionError(ValueError):
    """An endpoint violates the convexity margin."""


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 200
    gradient_tolerance: float = 1e-10
    initial_step: float = 1.0
    backtracking: float = 0.5
    armijo: float = 1e-4
    convexity_margin: float = 1e-3
    lambda_schedule: tuple[float, ...] = (0.0,)
    velocity_form: str = "derived"
    rng_seed: int = 0
    method: str = "auto"
    min_step: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "lambda_schedule",
                           tuple(float(x) for x in self.lambda_schedule))
        sched = self.lambda_schedule
        if not sched or sched[0] != 0.0:
            raise ValueError("lambda_schedule must start at 0")
        if any(b <= a for a, b in zip(sched, sched[1:])):
            raise ValueError("lambda_schedule must be strictly increasing")
        if not self.gradient_tolerance > 0:
            raise ValueError("gradient_tolerance must be positive")
        if not self.convexity_margin > 0:
            raise ValueError("convexity_margin must be positive")
        if not 0 < self.backtracking < 1 or not 0 < self.armijo < 1:
            raise ValueError("backtracking and armijo constants must lie in (0, 1)")
        if self.max_iterations < 0 or self.initial_step <= 0:
            raise ValueError("max_iterations >= 0 and initial_step > 0 required")
        if self.velocity_form not in VELOCITY_FORMS:
            raise ValueError(f"velocity_form must be one of {VELOCITY_FORMS}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")

    def coupling(self, lam: float) -> CouplingConfig:
        return CouplingConfig(lam, self.velocity_form)

    def stage_method(self, lam: float) -> str:
        if self.method != "auto":
            return self.method
        return "damped-newton" if lam == 0 else "newton"


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    lam: float
    lh: float
    grad_linf: float
    min_eig: float


@dataclass(frozen=True)
class StageResult:
    lam: float
    method: str
    converged: bool
    iterations: int
    grad_linf: float


@dataclass(frozen=True, eq=False)
class SolveResult:
    path: PotentialPath
    converged: bool
    iterations: int
    grad_linf: float
    trace: tuple[TraceRow, ...]
    stages: tuple[StageResult, ...]
    residuals: dict[str, ResidualReport] = field(default_factory=dict)
    energy_profile: np.ndarray | None = None
    velocity_min_eig: np.ndarray | None = None

    @property
    def final_lambda(self) -> float:
        return self.stages[-1].lam


# Oracles.

def quadratic_geodesic(background: ToricBackground, time: TimeAxis, c0: float, c1: float,
                       lam: float = 0.0, velocity_form: str = "derived") -> PotentialPath:
    """Critical path from ``c0|x|^2/2`` to ``c1|x|^2/2`` over ``F0 = |x|^2/2``.

    With ``r(t) = (1 - t)/c0 + t/c1`` the classical geodesic is
    ``F_t = |x|^2 / (2 r(t))``: the duals ``r|y|^2/2`` interpolate linearly.
    For ``lam > 0`` the same quadratic part solves the magnetic equation once
    a spatially constant ``b(t)`` with ``b(0) = b(1) = 0`` is added; ``b`` is
    the affine-corrected ``p(t)`` below, ``beta = 1/c1 - 1/c0``:

        n=1:           p = 4 lam log r
        n=2 derived:   p = lam (6 beta / r - 8 r log r)
        n=2 literal:   p = lam  6 beta / r
    """
    if velocity_form not in VELOCITY_FORMS:
        raise ValueError(f"velocity_form must be one of {VELOCITY_FORMS}")
    if not (c0 > 0 and c1 > 0):
        raise ValueError("quadratic endpoints need positive coefficients")
    grid = background.grid
    n = grid.dim
    beta = 1 / c1 - 1 / c0

    def r(t):
        return (1 - t) / c0 + t / c1

    def p(t):
        if n == 1:
            return 4 * lam * np.log(r(t))
        out = 6 * lam * beta / r(t)
        if velocity_form == "derived":
            out = out - 8 * lam * r(t) * np.log(r(t))
        return out

    t = time.knots
    b = p(t) - (1 - t) * p(0.0) - t * p(1.0)
    shape = (-1,) + (1,) * n
    r2 = sum(c**2 for c in grid.coords)
    F = r2 / (2 * r(t).reshape(shape)) + b.reshape(shape)
    return PotentialPath(background, time, F - background.F0.values)


def dual_interpolation_geodesic(
    background: ToricBackground,
    time: TimeAxis,
    duals: Sequence[tuple[Callable, Callable]],
    dual_interval: tuple[float, float],
) -> PotentialPath:
    """1-D geodesic whose endpoint duals are given analytically.

    ``duals`` holds ``(u, du)`` pairs for the two endpoints, strictly convex
    on ``dual_interval`` with ``du`` mapping it onto a range that contains
    the primal box. At each knot ``F_t(x) = x y - u_t(y)`` where
    ``du_t(y) = x``, found by bisection.
    """
    grid = background.grid
    if grid.dim != 1:
        raise ValueError("dual interpolation oracle is one-dimensional")
    (u0, du0), (u1, du1) = duals
    lo, hi = dual_interval
    x = grid.axes[0]
    slices = []
    for t in time.knots:
        du = lambda y: (1 - t) * du0(y) + t * du1(y)  # noqa: E731
        if du(lo) > x[0] or du(hi) < x[-1]:
            raise ValueError("dual interval does not cover the primal box")
        a = np.full_like(x, lo)
        b = np.full_like(x, hi)
        for _ in range(200):
            mid = 0.5 * (a + b)
            right = du(mid) > x
            b = np.where(right, mid, b)
            a = np.where(right, a, mid)
            if np.all(b - a <= 4 * np.finfo(float).eps * np.maximum(1, np.abs(a))):
                break
        y = 0.5 * (a + b)
        slices.append(x * y - ((1 - t) * u0(y) + t * u1(y)))
    return PotentialPath(background, time, np.array(slices) - background.F0.values)


def oracle_geodesic(phi0: ToricPotential, phi1: ToricPotential, time: TimeAxis,
                    dual_grid: Grid, return_mask: bool = False):
    """Geodesic by linear interpolation of discrete Legendre duals.

    Raises :class:`~toric_magnetic.ma_ops.RangeCoverageError` when an
    endpoint's gradient range misses part of the dual box. The transform
    back to the primal grid is unchecked; with ``return_mask=True`` a boolean
    array marks the nodes whose maximizer lies inside the dual grid, i.e.
    where the oracle can be trusted.
    """
    bg = phi0.background
    grid = bg.grid
    d0 = legendre(phi0.F, dual_grid).values
    d1 = legendre(phi1.F, dual_grid).values
    vals = np.empty((time.steps + 1,) + grid.shape)
    trusted = np.ones(vals.shape, dtype=bool)
    for k, t in enumerate(time.knots):
        Ft, inside = _legendre_values((1 - t) * d0 + t * d1, dual_grid, grid)
        vals[k] = Ft - bg.F0.values
        trusted[k] = inside
    vals[0] = phi0.phi.values
    vals[-1] = phi1.phi.values
    path = PotentialPath(bg, time, vals, check=False)
    return (path, trusted) if return_mask else path


# Optimizer internals.

def _min_eig(path_vals: np.ndarray, bg: ToricBackground) -> float:
    from .ma_ops import min_hessian_eigenvalue
    return float(min_hessian_eigenvalue(bg.F0.values + path_vals, bg.grid.spacing).min())


class _Problem:
    """Flattened view of the free degrees of freedom of a path."""

    def __init__(self, path: PotentialPath, cfg: CouplingConfig):
        self.template = path
        self.cfg = cfg
        self.mask = free_mask(path)
        self.base = path.values.copy()

    def values(self, x: np.ndarray) -> np.ndarray:
        vals = self.base.copy()
        vals[self.mask] = x
        return vals

    def x0(self) -> np.ndarray:
        return self.base[self.mask].copy()

    def path(self, x: np.ndarray, check: bool = False) -> PotentialPath:
        return self.template.with_values(self.values(x), check=check)

    def evaluate(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        value, g = lh_and_gradient(self.path(x), self.cfg)
        return value, g[self.mask]

    def min_eig(self, x: np.ndarray) -> float:
        return _min_eig(self.values(x), self.template.background)

    def jacobian(self, x: np.ndarray, eps: float = 1e-6) -> sp.csr_matrix:
        """Sparse Jacobian of the gradient by colored central differences.

        The gradient at (knot k, node p) depends on knots k-1..k+1 and nodes
        within Chebyshev distance 2, so DOFs sharing ``k mod 3`` and
        ``p_i mod 5`` never interact.
        """
        dim = self.template.grid.dim
        idx = np.argwhere(self.mask)
        number = -np.ones(self.mask.shape, dtype=np.int64)
        number[self.mask] = np.arange(len(idx))
        periods = (3,) + (5,) * dim
        rows, cols, data = [], [], []
        for color in np.ndindex(*periods):
            sel = np.all(idx % periods == color, axis=1)
            if not sel.any():
                continue
            d = np.zeros(len(idx))
            d[sel] = eps
            dg = (self.evaluate(x + d)[1] - self.evaluate(x - d)[1]) / (2 * eps)
            half = np.array(periods) // 2
            offset = (np.array(color) - idx + half) % periods - half
            target = idx + offset
            ok = np.all((target >= 0) & (target < self.mask.shape), axis=1)
            col = np.full(len(idx), -1)
            col[ok] = number[tuple(target[ok].T)]
            keep = col >= 0
            rows.append(np.nonzero(keep)[0])
            cols.append(col[keep])
            data.append(dg[keep])
        J = sp.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(len(idx), len(idx)),
        )
        return ((J + J.T) * 0.5).tocsc()

    def time_preconditioner(self, x: np.ndarray) -> sp.csc_matrix:
        """Weighted time Laplacian of the kinetic part of the energy."""
        path = self.path(x)
        grid = path.grid
        bg = path.background
        tau = path.time.tau
        vals = path.values
        a = 0.5 * (vals[1:] + vals[:-1])
        m = np.zeros(a.shape)
        dens = det_parts(hess_arrays(bg.F0.values + a, grid.spacing))
        m[(slice(None),) + grid.interior] = np.maximum(dens, 1e-12)
        c = m * grid.cell_volume / (tau * bg.V)
        number = -np.ones(self.mask.shape, dtype=np.int64)
        number[self.mask] = np.arange(self.mask.sum())
        diag = (c[:-1] + c[1:])[self.mask[1:-1]]
        # coupling between knot k and k+1 is c[k] for k = 1..M-2
        lower = number[1:-1][:-1]
        upper = number[1:-1][1:]
        both = (lower >= 0) & (upper >= 0)
        off = -c[1:-1][both]
        i, j = lower[both], upper[both]
        n = int(self.mask.sum())
        P = sp.coo_matrix(
            (np.concatenate([diag, off, off]),
             (np.concatenate([np.arange(n), i, j]), np.concatenate([np.arange(n), j, i]))),
            shape=(n, n),
        )
        return P.tocsc()


def _spd_factor(A: sp.spmatrix):
    """LU factor of a symmetric matrix, or ``None`` if it is not positive definite.

    With diagonal pivoting and a symmetric ordering the LU pivots are the
    LDL^T pivots, so their signs give the inertia.
    """
    try:
        lu = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError:
        return None
    piv = lu.U.diagonal()
    if not np.all(np.isfinite(piv)) or np.any(piv <= 0):
        return None
    if np.any(lu.perm_r != lu.perm_c):
        return None
    return lu


def _run_stage(prob: _Problem, x: np.ndarray, lam: float, method: str,
               cfg: SolverConfig, trace: list[TraceRow]) -> tuple[np.ndarray, StageResult]:
    """One continuation stage.

    ``descent``: preconditioned gradient descent with Armijo backtracking on lh.
    ``damped-newton``: Newton steps regularized by ``mu P`` (``P`` the
    kinetic time Laplacian) until the system is positive definite, Armijo on
    lh; ``mu`` shrinks after full steps. Used for minimization stages.
    ``newton``: Newton steps on the gradient with backtracking on its sup
    norm. Critical points with ``lam > 0`` are saddles of lh, so this is the
    default there.
    """
    value, g = prob.evaluate(x)
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    trace.append(TraceRow(0, lam, value, gnorm, prob.min_eig(x)))
    it = 0
    step = cfg.initial_step
    mu = 0.0
    while gnorm > cfg.gradient_tolerance and it < cfg.max_iterations:
        if method == "newton":
            d = spla.spsolve(prob.jacobian(x), -g)
            step = cfg.initial_step
        elif method == "damped-newton":
            J = prob.jacobian(x)
            P = prob.time_preconditioner(x)
            while True:
                lu = _spd_factor(J + mu * P)
                if lu is not None:
                    break
                mu = max(10 * mu, 1e-3)
            d = -lu.solve(g)
            step = cfg.initial_step
        else:
            d = -spla.splu(prob.time_preconditioner(x)).solve(g)
            step = min(cfg.initial_step, 2 * step)
        slope = float(g @ d)
        accepted = False
        while step >= cfg.min_step:
            xn = x + step * d
            lam_min = prob.min_eig(xn)
            if lam_min >= cfg.convexity_margin:
                vn, gn = prob.evaluate(xn)
                gn_norm = float(np.max(np.abs(gn)))
                if method == "newton":
                    ok = gn_norm <= (1 - cfg.armijo * step) * gnorm
                else:
                    ok = vn <= value + cfg.armijo * step * slope
                    # near the minimizer rounding hides the Armijo decrease
                    if not ok and method == "damped-newton":
                        ok = vn <= value and gn_norm < gnorm
                if ok and np.isfinite(vn):
                    accepted = True
                    break
            step *= cfg.backtracking
        if method == "damped-newton":
            if accepted and step == cfg.initial_step:
                mu = 0.0 if mu <= 1e-3 else mu / 10
            else:
                mu = max(10 * mu, 1e-3)
                if not accepted and mu < 1e8:
                    continue
        if not accepted:
            log.warning("stage lam=%g: line search failed at iteration %d", lam, it)
            break
        it += 1
        x, value, g, gnorm = xn, vn, gn, gn_norm
        trace.append(TraceRow(it, lam, value, gnorm, lam_min))
    converged = gnorm <= cfg.gradient_tolerance
    log.info("stage lam=%g (%s): %d iterations, |grad| = %.3e", lam, method, it, gnorm)
    return x, StageResult(lam, method, converged, it, gnorm)


def residual_reports(path: PotentialPath, lam: float) -> dict[str, ResidualReport]:
    return {
        "geodesic": geodesic_residual(path),
        "magnetic_derived": magnetic_residual(path, CouplingConfig(lam, "derived")),
        "magnetic_literal": magnetic_residual(path, CouplingConfig(lam, "literal")),
        "hcma": hcma_residual(path),
    }


def boundary_weight(grid: Grid) -> np.ndarray:
    """C^1 weight equal to 1 on the two pinned node layers and 0 at the centre.

    ``1 - prod_i (1 - s_i^2)^2`` with ``s_i`` the coordinate scaled so that
    layer 1 sits at ``|s_i| = 1``.
    """
    w = np.ones(grid.shape)
    for ax, h in zip(grid.coords, grid.spacing):
        lo, hi = ax.min() + h, ax.max() - h
        s = np.clip((2 * ax - (lo + hi)) / (hi - lo), -1, 1)
        w = w * (1 - s**2) ** 2
    w = 1 - w
    w[~grid.core_mask] = 1.0
    return w


def impose_boundary(path: PotentialPath, target: PotentialPath,
                    check: bool = True) -> PotentialPath:
    """Move the pinned layers of ``path`` onto those of ``target``.

    The change is spread into the core with :func:`boundary_weight` so the
    slices stay smooth; endpoint slices are left alone.
    """
    if target.grid != path.grid or target.time != path.time:
        raise ValueError("boundary data lives on a different grid or time axis")
    vals = path.values.copy()
    w = boundary_weight(path.grid)
    vals[1:-1] += w * (target.values[1:-1] - vals[1:-1])
    return path.with_values(vals, check=check)


def solve(phi0: ToricPotential, phi1: ToricPotential, time: TimeAxis,
          cfg: SolverConfig, initial: PotentialPath | None = None,
          boundary: Callable[[float], PotentialPath] | None = None) -> SolveResult:
    """Find a discrete critical path of the Landau-Hall functional.

    Runs one stage per entry of ``cfg.lambda_schedule``, warm-starting each
    from the previous one. ``initial`` supplies the starting path and, through
    its two outermost node layers, the spatial boundary data; the default is
    straight-line interpolation. ``boundary(lam)``, when given, returns a path
    whose pinned layers are imposed at the start of the stage for ``lam``
    (see :func:`impose_boundary`).

    Stage methods are described in :func:`_run_stage`; ``auto`` uses damped
    Newton at ``lam = 0`` and Newton on the gradient for ``lam > 0``.
    """
    for name, phi in (("phi0", phi0), ("phi1", phi1)):
        lam = phi.min_eigenvalue()
        if lam < cfg.convexity_margin:
            raise SolverPreconditionError(
                f"{name}: min Hessian eigenvalue {lam:.3g} below margin {cfg.convexity_margin}"
            )
    if initial is None:
        path = PotentialPath.linear(phi0, phi1, time)
    else:
        if initial.time != time or initial.grid != phi0.grid:
            raise ValueError("initial path does not match the time axis or grid")
        vals = initial.values.copy()
        vals[0] = phi0.phi.values
        vals[-1] = phi1.phi.values
        path = initial.with_values(vals, check=False)

    trace: list[TraceRow] = []
    stages: list[StageResult] = []
    stationary = np.array_equal(phi0.phi.values, phi1.phi.values)
    if stationary:
        path = PotentialPath.constant(phi0, time)
        boundary = None
    elif boundary is not None:
        target = boundary(cfg.lambda_schedule[0])
        path = impose_boundary(path, target, check=False)
    min_start = float(path.min_eigenvalues().min())
    if min_start < cfg.convexity_margin:
        raise SolverPreconditionError(
            f"starting path violates the convexity margin ({min_start:.3g})"
        )

    x = None
    prob = None
    for lam in cfg.lambda_schedule:
        if x is not None:
            path = prob.path(x)
            if boundary is not None:
                new_target = boundary(lam)
                vals = path.values.copy()
                vals[1:-1] += new_target.values[1:-1] - target.values[1:-1]
                target = new_target
                path = path.with_values(vals, check=False)
                lam_min = float(path.min_eigenvalues().min())
                if lam_min < cfg.convexity_margin:
                    raise SolverPreconditionError(
                        f"boundary data for lam={lam:g} breaks the convexity margin "
                        f"({lam_min:.3g})"
                    )
        prob = _Problem(path, cfg.coupling(lam))
        x = prob.x0()
        x, stage = _run_stage(prob, x, lam, cfg.stage_method(lam), cfg, trace)
        stages.append(stage)

    final = prob.path(x, check=True)
    vals = final.values.copy()
    vals[0] = phi0.phi.values
    vals[-1] = phi1.phi.values
    final = final.with_values(vals)
    lam_final = cfg.lambda_schedule[-1]
    return SolveResult(
        path=final,
        converged=all(s.converged for s in stages),
        iterations=sum(s.iterations for s in stages),
        grad_linf=stages[-1].grad_linf,
        trace=tuple(trace),
        stages=tuple(stages),
        residuals=residual_reports(final, lam_final),
        energy_profile=energy_profile(final),
        velocity_min_eig=velocity_min_eigenvalues(final, cfg.velocity_form),
    )
