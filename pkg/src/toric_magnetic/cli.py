"""Command-line front end: ``gradcheck``, ``solve`` and ``oracle-compare``.

Each subcommand reads one scenario file (see :mod:`toric_magnetic.scenario`)
and writes machine-readable diagnostics into the output directory. Floats go
to CSV with 17 significant digits and to JSON with Python's round-trip
``repr``, so re-reading an output reproduces the in-memory values exactly.

Exit codes: 0 success, 1 any other failure (including a non-converged solve
or a failed check), 2 invalid scenario, 3 solver precondition, 4 oracle
range coverage.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .functional import VELOCITY_FORMS, CouplingConfig, gradient_check
from .ma_ops import RangeCoverageError
from .residuals import geodesic_residual, hcma_residual
from .scenario import ConfigError, Scenario, load_scenario
from .solver import SolveResult, SolverPreconditionError, oracle_geodesic, solve

log = logging.getLogger("toric_magnetic")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3
EXIT_ORACLE = 4

TRACE_COLUMNS = ("iter", "lambda", "lh", "grad_linf", "min_eig")
RESIDUAL_COLUMNS = ("t_index", "geodesic_l2", "geodesic_linf", "magnetic_derived_l2",
                    "magnetic_derived_linf", "magnetic_literal_l2",
                    "magnetic_literal_linf", "hcma_linf")
ENERGY_COLUMNS = ("t_index", "t", "energy")


def fmt(x: float | int) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % x


def write_csv(path: Path, columns: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


def write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, allow_nan=True)
        fh.write("\n")


# Row builders, shared with tests.

def trace_rows(result: SolveResult):
    return [(r.iteration, r.lam, r.lh, r.grad_linf, r.min_eig) for r in result.trace]


def residual_rows(result: SolveResult):
    res = result.residuals
    rows = []
    for i in range(result.path.steps - 1):
        rows.append((
            i + 1,
            res["geodesic"].l2[i], res["geodesic"].linf[i],
            res["magnetic_derived"].l2[i], res["magnetic_derived"].linf[i],
            res["magnetic_literal"].l2[i], res["magnetic_literal"].linf[i],
            res["hcma"].linf[i],
        ))
    return rows


def energy_rows(result: SolveResult):
    knots = result.path.time.knots
    return [(k, knots[k], e) for k, e in enumerate(result.energy_profile, start=1)]


def path_document(result: SolveResult, scenario: Scenario) -> dict:
    path = result.path
    return {
        "grid": path.grid.as_dict(),
        "time": {"steps": path.steps, "knots": path.time.knots.tolist()},
        "background": path.background.F0.values.tolist(),
        "slices": [s.tolist() for s in path.values],
        "lambda": result.final_lambda,
        "velocity_form": scenario.solver.velocity_form,
    }


# Commands.

def _setup(scenario: Scenario):
    bg = scenario.build_background()
    phi0, phi1 = scenario.build_endpoints(bg)
    return bg, phi0, phi1


def run_gradcheck(scenario: Scenario) -> int:
    bg, phi0, phi1 = _setup(scenario)
    path = scenario.initial_path(bg, phi0, phi1)
    spec = scenario.gradcheck
    lams = sorted(set(scenario.solver.lambda_schedule))
    rows = []
    ok = True
    for lam in lams:
        for form in VELOCITY_FORMS:
            cfg = CouplingConfig(lam, form)
            for row in gradient_check(path, cfg, spec.directions,
                                      scenario.solver.rng_seed, spec.epsilon, spec.order):
                passed = row.passed(spec.tolerance)
                ok &= passed
                rows.append({"lambda": lam, "velocity_form": form,
                             "direction_index": row.direction_index,
                             "analytic": row.analytic, "numeric": row.numeric,
                             "rel_error": row.rel_error, "passed": passed})
    out = scenario.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "gradcheck.json", {"tolerance": spec.tolerance, "absolute_floor": 1e-10,
                                        "epsilon": spec.epsilon, "order": spec.order,
                                        "passed": ok, "rows": rows})
    worst = max(r["rel_error"] for r in rows)
    log.info("gradcheck: %d directions, worst rel_error %.3e", len(rows), worst)
    return EXIT_OK if ok else EXIT_FAILURE


def run_solve(scenario: Scenario) -> int:
    bg, phi0, phi1 = _setup(scenario)
    initial = scenario.initial_path(bg, phi0, phi1)
    result = solve(phi0, phi1, scenario.time, scenario.solver, initial=initial,
                   boundary=scenario.boundary_data(bg))
    out = scenario.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "trace.csv", TRACE_COLUMNS, trace_rows(result))
    write_csv(out / "residuals.csv", RESIDUAL_COLUMNS, residual_rows(result))
    write_csv(out / "energy_profile.csv", ENERGY_COLUMNS, energy_rows(result))
    write_json(out / "path.json", path_document(result, scenario))
    write_json(out / "summary.json", {
        "converged": result.converged,
        "iterations": result.iterations,
        "grad_linf": result.grad_linf,
        "stages": [{"lambda": s.lam, "method": s.method, "converged": s.converged,
                    "iterations": s.iterations, "grad_linf": s.grad_linf}
                   for s in result.stages],
        "velocity_min_eig": result.velocity_min_eig.tolist(),
        "nonconvex_velocity_steps": int(np.sum(result.velocity_min_eig <= 0)),
        "residual_max_linf": {k: r.max_linf for k, r in result.residuals.items()},
    })
    log.info("solve: converged=%s after %d iterations, |grad| = %.3e",
             result.converged, result.iterations, result.grad_linf)
    return EXIT_OK if result.converged else EXIT_FAILURE


def run_oracle_compare(scenario: Scenario) -> int:
    if scenario.grid.dim != 1:
        raise ConfigError("oracle-compare needs a one-dimensional grid", None, scenario.source)
    bg, phi0, phi1 = _setup(scenario)
    oracle, trusted = oracle_geodesic(phi0, phi1, scenario.time,
                                      scenario.dual_grid(phi0, phi1), return_mask=True)
    lam0 = replace(scenario.solver, lambda_schedule=(0.0,))
    result = solve(phi0, phi1, scenario.time, lam0,
                   initial=scenario.initial_path(bg, phi0, phi1),
                   boundary=scenario.boundary_data(bg))
    diff = np.abs(result.path.values - oracle.values)[trusted]
    linf = float(diff.max())
    tol = scenario.oracle_tolerance()
    h = max(scenario.grid.spacing)
    out = scenario.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "oracle.json", {
        "linf_distance": linf,
        "geodesic_residual_oracle": geodesic_residual(oracle).max_linf,
        "geodesic_residual_solver": result.residuals["geodesic"].max_linf,
        "hcma_residual_oracle": hcma_residual(oracle).max_linf,
        "tolerance": tol,
        "scale_constant": linf / (h**2 + scenario.time.tau**2),
        "trusted_fraction": float(trusted.mean()),
        "solver_converged": result.converged,
    })
    log.info("oracle-compare: linf distance %.3e (tolerance %.3e)", linf, tol)
    return EXIT_OK if linf <= tol and result.converged else EXIT_FAILURE


COMMANDS = {
    "gradcheck": run_gradcheck,
    "solve": run_solve,
    "oracle-compare": run_oracle_compare,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="toric-magnetic", description=__doc__.split("\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("config", help="scenario JSON file")
    p.add_argument("--out", type=Path, default=None, help="override the output directory")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        scenario = load_scenario(args.config)
        if args.out is not None:
            scenario = scenario.with_output_dir(args.out)
        return COMMANDS[args.command](scenario)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverPreconditionError as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except RangeCoverageError as exc:
        print(f"oracle range: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except Exception as exc:  # noqa: BLE001
        log.debug("unhandled error", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
