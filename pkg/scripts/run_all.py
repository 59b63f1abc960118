"""Run every applicable CLI command on each shipped scenario into runs/."""

from __future__ import annotations

import sys
from pathlib import Path

from toric_magnetic.cli import main

HERE = Path(__file__).resolve().parent
RUNS = [
    ("gradcheck", "gradcheck_1d"),
    ("gradcheck", "gradcheck_2d"),
    ("solve", "quadratic_geodesic"),
    ("solve", "magnetic_continuation"),
    ("solve", "equal_endpoints"),
    ("oracle-compare", "quadratic_geodesic"),
]


def run(root: Path) -> int:
    worst = 0
    for command, name in RUNS:
        out = root / command / name
        code = main([command, str(HERE / "scenarios" / f"{name}.json"), "--out", str(out)])
        print(f"{command:15s} {name:24s} exit {code}  -> {out}")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(run(Path(sys.argv[1]) if len(sys.argv) > 1 else Path("runs")))
