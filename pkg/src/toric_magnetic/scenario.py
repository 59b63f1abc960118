"""Scenario files: one JSON document describing a run.

Example::

    {
      "grid": {"dim": 1, "points": 33, "box": [-0.5, 0.5]},
      "time": {"steps": 16},
      "background": {"preset": "quadratic"},
      "phi0": {"preset": "zero"},
      "phi1": {"preset": "quadratic-bump", "amplitude": 1.0},
      "coupling": {"lambda_schedule": [0, 0.25, 0.5, 1], "velocity_form": "derived"},
      "solver": {"max_iterations": 100, "gradient_tolerance": 1e-10},
      "start": "linear",
      "boundary": "closed-form",
      "output_dir": "out"
    }

Field presets are ``zero``, ``quadratic-bump`` (``a |x|^2 / 2``) and
``quartic-bump`` (``a |x|^4 / 12``); ``{"tabulated": [...]}`` gives values
on the grid directly. ``boundary`` selects the data on the two pinned node
layers: ``linear`` keeps the start path's values, ``closed-form`` uses the
exact critical path of the quadratic family (quadratic background and
``zero``/``quadratic-bump`` endpoints only).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from .functional import VELOCITY_FORMS, PotentialPath
from .grid import Grid, ScalarField, TimeAxis
from .ma_ops import ConvexityError, ToricBackground, ToricPotential
from .solver import (
    METHODS,
    SolverConfig,
    impose_boundary,
    oracle_geodesic,
    quadratic_geodesic,
)

FIELD_PRESETS = ("zero", "quadratic-bump", "quartic-bump")
STARTS = ("linear", "oracle")
BOUNDARIES = ("linear", "closed-form")

_TOP_KEYS = {"grid", "time", "background", "phi0", "phi1", "coupling", "solver",
             "start", "boundary", "gradcheck", "oracle", "output_dir"}
_SOLVER_KEYS = {"max_iterations", "gradient_tolerance", "initial_step", "backtracking",
                "armijo", "convexity_margin", "rng_seed", "method", "min_step"}


class ConfigError(ValueError):
    """Invalid scenario file; ``line`` points into the file when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.message = message
        self.line = line
        self.source = source
        where = source or "<scenario>"
        super().__init__(f"{where}:{line}: {message}" if line else f"{where}: {message}")


@dataclass(frozen=True)
class FieldSpec:
    preset: str | None = "zero"
    amplitude: float = 1.0
    table: tuple | None = None

    def sample(self, grid: Grid) -> ScalarField:
        if self.table is not None:
            return ScalarField(grid, np.array(self.table, dtype=float))
        r2 = sum(c**2 for c in grid.coords)
        if self.preset == "zero":
            return ScalarField(grid, np.zeros(grid.shape))
        if self.preset == "quadratic-bump":
            return ScalarField(grid, self.amplitude * r2 / 2)
        return ScalarField(grid, self.amplitude * r2**2 / 12)

    def quadratic_coefficient(self) -> float | None:
        """``c`` with ``|x|^2/2 + field = c |x|^2/2``, when such a ``c`` exists."""
        if self.table is not None:
            return None
        if self.preset == "zero":
            return 1.0
        if self.preset == "quadratic-bump":
            return 1.0 + self.amplitude
        return None


@dataclass(frozen=True)
class GradcheckSpec:
    directions: int = 20
    epsilon: float = 1e-5
    tolerance: float = 1e-5
    order: int = 4


@dataclass(frozen=True)
class OracleSpec:
    dual_points: int | None = None
    dual_box: tuple[float, float] | None = None
    tolerance: float | None = None
    tolerance_constant: float = 5.0


@dataclass(frozen=True)
class Scenario:
    grid: Grid
    time: TimeAxis
    background: FieldSpec = FieldSpec("quadratic")
    phi0: FieldSpec = FieldSpec()
    phi1: FieldSpec = FieldSpec()
    solver: SolverConfig = SolverConfig()
    start: str = "linear"
    boundary: str = "linear"
    gradcheck: GradcheckSpec = GradcheckSpec()
    oracle: OracleSpec = OracleSpec()
    output_dir: Path = Path("out")
    source: str | None = field(default=None, compare=False)

    # Built objects.

    def build_background(self) -> ToricBackground:
        if self.background.table is not None:
            return ToricBackground(self.background.sample(self.grid))
        return ToricBackground.quadratic(self.grid)

    def build_endpoints(self, bg: ToricBackground) -> tuple[ToricPotential, ToricPotential]:
        return (ToricPotential(bg, self.phi0.sample(self.grid)),
                ToricPotential(bg, self.phi1.sample(self.grid)))

    def closed_form(self, bg: ToricBackground, lam: float) -> PotentialPath:
        c0 = self.phi0.quadratic_coefficient()
        c1 = self.phi1.quadratic_coefficient()
        return quadratic_geodesic(bg, self.time, c0, c1, lam, self.solver.velocity_form)

    def boundary_data(self, bg: ToricBackground):
        """Callable ``lam -> path`` for :func:`solver.solve`, or ``None``."""
        if self.boundary == "linear":
            return None
        return lambda lam: self.closed_form(bg, lam)

    def initial_path(self, bg: ToricBackground, phi0: ToricPotential,
                     phi1: ToricPotential) -> PotentialPath:
        """The start path with the boundary data of the first stage in place."""
        if self.start == "oracle":
            path = oracle_geodesic(phi0, phi1, self.time, self.dual_grid(phi0, phi1))
        else:
            path = PotentialPath.linear(phi0, phi1, self.time)
        if self.boundary == "closed-form":
            target = self.closed_form(bg, self.solver.lambda_schedule[0])
        elif self.start == "oracle":
            # the oracle is untrusted on the pinned layers
            target = PotentialPath.linear(phi0, phi1, self.time)
        else:
            return path
        return impose_boundary(path, target, check=False)

    def dual_grid(self, phi0: ToricPotential, phi1: ToricPotential) -> Grid:
        """Dual grid for the Legendre oracle.

        Defaults: four times the primal points per axis on 90% of the box
        where the gradient ranges of both endpoints overlap.
        """
        spec = self.oracle
        points = spec.dual_points or 4 * (self.grid.points[0] - 1) + 1
        if spec.dual_box is not None:
            box = (tuple(spec.dual_box),) * self.grid.dim
        else:
            box = []
            for ax in range(self.grid.dim):
                lo, hi = -np.inf, np.inf
                for phi in (phi0, phi1):
                    g = np.gradient(phi.F.values, *self.grid.axes)
                    g = g[ax] if self.grid.dim > 1 else g
                    lo, hi = max(lo, float(g.min())), min(hi, float(g.max()))
                mid, half = 0.5 * (lo + hi), 0.45 * (hi - lo)
                box.append((mid - half, mid + half))
            box = tuple(box)
        return Grid(self.grid.dim, (points,) * self.grid.dim, box)

    def oracle_tolerance(self) -> float:
        if self.oracle.tolerance is not None:
            return self.oracle.tolerance
        h = max(self.grid.spacing)
        return self.oracle.tolerance_constant * (h**2 + self.time.tau**2)

    def with_output_dir(self, out: Path) -> Scenario:
        return replace(self, output_dir=Path(out))


# Loading.

def _line_of(text: str, keys: list[str]) -> int | None:
    """Line of the last key in ``keys``, searching each key after the previous."""
    pos = 0
    line = None
    for key in keys:
        m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, pos)
        if m is None:
            return line
        pos = m.end()
        line = text.count("\n", 0, m.start()) + 1
    return line


class _Reader:
    def __init__(self, text: str, source: str | None):
        self.text = text
        self.source = source

    def fail(self, path: list[str], message: str):
        raise ConfigError(message, _line_of(self.text, path) or 1, self.source)

    def number(self, obj: dict, key: str, path: list[str], default=None, integer=False,
               positive=False, minimum=None):
        if key not in obj:
            if default is None:
                self.fail(path, f"missing '{'.'.join(path + [key])}'")
            return default
        v = obj[key]
        ok = isinstance(v, int) if integer else isinstance(v, (int, float))
        if isinstance(v, bool) or not ok or not np.isfinite(v):
            kind = "an integer" if integer else "a finite number"
            self.fail(path + [key], f"'{'.'.join(path + [key])}' must be {kind}")
        if positive and v <= 0:
            self.fail(path + [key], f"'{'.'.join(path + [key])}' must be positive")
        if minimum is not None and v < minimum:
            self.fail(path + [key], f"'{'.'.join(path + [key])}' must be >= {minimum}")
        return v

    def choice(self, obj: dict, key: str, path: list[str], options, default):
        v = obj.get(key, default)
        if v not in options:
            self.fail(path + [key], f"'{'.'.join(path + [key])}' must be one of {list(options)}")
        return v

    def section(self, obj: dict, key: str, required=False) -> dict:
        if key not in obj:
            if required:
                self.fail([], f"missing '{key}' section")
            return {}
        v = obj[key]
        if not isinstance(v, dict):
            self.fail([key], f"'{key}' must be an object")
        return v

    def unknown(self, obj: dict, allowed: set, path: list[str]):
        for k in obj:
            if k not in allowed:
                self.fail(path + [k], f"unknown key '{'.'.join(path + [k])}'")


def _read_grid(r: _Reader, raw: dict) -> Grid:
    g = r.section(raw, "grid", required=True)
    r.unknown(g, {"dim", "points", "box"}, ["grid"])
    dim = r.number(g, "dim", ["grid"], integer=True)
    if dim not in (1, 2):
        r.fail(["grid", "dim"], "'grid.dim' must be 1 or 2")
    if "points" not in g:
        r.fail(["grid"], "missing 'grid.points'")
    pts = g["points"]
    pts = [pts] * dim if isinstance(pts, int) and not isinstance(pts, bool) else pts
    if (not isinstance(pts, list) or len(pts) != dim
            or not all(isinstance(p, int) and not isinstance(p, bool) and p >= 5 for p in pts)):
        r.fail(["grid", "points"], "'grid.points' must be an integer >= 5 or one per axis")
    box = g.get("box", [-0.5, 0.5])
    if isinstance(box, list) and len(box) == 2 and all(isinstance(b, (int, float)) for b in box):
        box = [box] * dim
    try:
        return Grid(dim, tuple(pts), tuple(tuple(b) for b in box))
    except (TypeError, ValueError) as exc:
        r.fail(["grid", "box"], f"invalid grid: {exc}")


def _read_field(r: _Reader, raw: dict, key: str, grid: Grid, presets) -> FieldSpec:
    if key not in raw:
        if key == "background":
            return FieldSpec("quadratic")
        r.fail([], f"missing '{key}' section")
    v = raw[key]
    if isinstance(v, str):
        v = {"preset": v}
    if not isinstance(v, dict):
        r.fail([key], f"'{key}' must be a preset name or an object")
    r.unknown(v, {"preset", "amplitude", "tabulated"}, [key])
    if "tabulated" in v:
        try:
            arr = np.array(v["tabulated"], dtype=float)
        except (TypeError, ValueError):
            r.fail([key, "tabulated"], f"'{key}.tabulated' must be a numeric array")
        if arr.shape != grid.shape or not np.all(np.isfinite(arr)):
            r.fail([key, "tabulated"],
                   f"'{key}.tabulated' must be finite with shape {list(grid.shape)}")
        return FieldSpec(None, 1.0, tuple(arr.ravel().tolist()))
    preset = r.choice(v, "preset", [key], presets, None)
    amp = r.number(v, "amplitude", [key], default=1.0)
    return FieldSpec(preset, float(amp))


def parse_scenario(text: str, source: str | None = None) -> Scenario:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno, source) from None
    r = _Reader(text, source)
    if not isinstance(raw, dict):
        raise ConfigError("scenario must be a JSON object", 1, source)
    r.unknown(raw, _TOP_KEYS, [])

    grid = _read_grid(r, raw)
    t = r.section(raw, "time", required=True)
    r.unknown(t, {"steps"}, ["time"])
    steps = r.number(t, "steps", ["time"], integer=True, minimum=2)

    background = _read_field(r, raw, "background", grid, ("quadratic",))
    phi0 = _read_field(r, raw, "phi0", grid, FIELD_PRESETS)
    phi1 = _read_field(r, raw, "phi1", grid, FIELD_PRESETS)

    c = r.section(raw, "coupling")
    r.unknown(c, {"lambda_schedule", "velocity_form"}, ["coupling"])
    sched = c.get("lambda_schedule", [0.0])
    if (not isinstance(sched, list) or not sched
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in sched)):
        r.fail(["coupling", "lambda_schedule"], "'coupling.lambda_schedule' must be a list of numbers")
    form = r.choice(c, "velocity_form", ["coupling"], VELOCITY_FORMS, "derived")

    s = r.section(raw, "solver")
    r.unknown(s, _SOLVER_KEYS, ["solver"])
    kwargs: dict[str, Any] = {}
    for f in fields(SolverConfig):
        if f.name not in s:
            continue
        if f.name == "method":
            kwargs["method"] = r.choice(s, "method", ["solver"], METHODS, "auto")
        else:
            integer = f.name in ("max_iterations", "rng_seed")
            kwargs[f.name] = r.number(s, f.name, ["solver"], integer=integer)
    try:
        solver = SolverConfig(lambda_schedule=tuple(sched), velocity_form=form, **kwargs)
    except ValueError as exc:
        key = "lambda_schedule" if "lambda_schedule" in str(exc) else None
        r.fail(["coupling", key] if key else ["solver"], str(exc))

    start = r.choice(raw, "start", [], STARTS, "linear")
    boundary = r.choice(raw, "boundary", [], BOUNDARIES, "linear")
    if boundary == "closed-form":
        if (background.table is not None or phi0.quadratic_coefficient() is None
                or phi1.quadratic_coefficient() is None):
            r.fail(["boundary"], "closed-form boundary needs the quadratic background and "
                   "zero or quadratic-bump endpoints")
        if min(phi0.quadratic_coefficient(), phi1.quadratic_coefficient()) <= 0:
            r.fail(["boundary"], "closed-form boundary needs positive quadratic endpoints")

    gsec = r.section(raw, "gradcheck")
    r.unknown(gsec, {"directions", "epsilon", "tolerance", "order"}, ["gradcheck"])
    gradcheck = GradcheckSpec(
        r.number(gsec, "directions", ["gradcheck"], default=20, integer=True, minimum=1),
        float(r.number(gsec, "epsilon", ["gradcheck"], default=1e-5, positive=True)),
        float(r.number(gsec, "tolerance", ["gradcheck"], default=1e-5, positive=True)),
        r.choice(gsec, "order", ["gradcheck"], (2, 4), 4),
    )

    osec = r.section(raw, "oracle")
    r.unknown(osec, {"dual_points", "dual_box", "tolerance", "tolerance_constant"}, ["oracle"])
    dual_points = osec.get("dual_points")
    if dual_points is not None:
        dual_points = r.number(osec, "dual_points", ["oracle"], integer=True, minimum=5)
    dual_box = osec.get("dual_box")
    if dual_box is not None:
        if (not isinstance(dual_box, list) or len(dual_box) != 2
                or not all(isinstance(b, (int, float)) for b in dual_box)
                or not dual_box[1] > dual_box[0]):
            r.fail(["oracle", "dual_box"], "'oracle.dual_box' must be [lo, hi] with lo < hi")
        dual_box = (float(dual_box[0]), float(dual_box[1]))
    tol = osec.get("tolerance")
    if tol is not None:
        tol = float(r.number(osec, "tolerance", ["oracle"], positive=True))
    oracle = OracleSpec(dual_points, dual_box, tol,
                        float(r.number(osec, "tolerance_constant", ["oracle"], default=5.0,
                                       positive=True)))

    out = raw.get("output_dir", "out")
    if not isinstance(out, str) or not out:
        r.fail(["output_dir"], "'output_dir' must be a non-empty string")

    scenario = Scenario(grid, TimeAxis(steps), background, phi0, phi1, solver, start,
                        boundary, gradcheck, oracle, Path(out), source)
    _validate_fields(scenario, r)
    return scenario


def _validate_fields(scenario: Scenario, r: _Reader) -> None:
    """Resolve presets up front so invalid fields fail before any run."""
    try:
        bg = scenario.build_background()
    except ConvexityError as exc:
        r.fail(["background"], f"background: {exc}")
    for key in ("phi0", "phi1"):
        try:
            ToricPotential(bg, getattr(scenario, key).sample(scenario.grid))
        except ConvexityError as exc:
            r.fail([key], f"{key}: {exc}")


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario: {exc.strerror}", None, str(path)) from None
    return parse_scenario(text, str(path))
