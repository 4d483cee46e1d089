"""Shared fixtures: cached minimizer solves used by several test modules."""
import hashlib
import json
import math
import os
import re
import time
from pathlib import Path

import numpy as np
import pytest

from weissfb.field import ScalarField
from weissfb.minimizer import SolverConfig, solve
from weissfb.physics import BoundaryData, ProblemSpec, VorticityModel

CACHE = Path(os.environ.get("WEISSFB_TEST_CACHE", Path(__file__).parent / "_cache"))

# tilted half-plane data: the free boundary crosses grid lines at a generic angle
TILT = math.pi / 2 + 0.4


def tilted_spec(n: int) -> ProblemSpec:
    return ProblemSpec((1.0, -1.0), None, VorticityModel.zero(), BoundaryData("half-plane", TILT), grid_n=n)


def frozen_wavy_spec(n: int) -> ProblemSpec:
    bd = BoundaryData("half-plane", TILT, amplitude=0.05, frequency=4.0)
    return ProblemSpec((1.0, -1.0), None, VorticityModel.zero(), bd, grid_n=n, frozen=True)


def _key(spec: ProblemSpec, config: SolverConfig) -> str:
    blob = json.dumps({"X0": spec.X0, "R0": spec.R0, "v": spec.vorticity.to_dict(), "b": spec.boundary.to_dict(),
                       "n": spec.grid_n, "d": spec.domain, "f": spec.frozen, "m": spec.margin,
                       "c": config.to_dict()}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:20]


def cached_solve(spec: ProblemSpec, config: SolverConfig = SolverConfig()) -> ScalarField:
    """Solve once per machine; later runs read the stored nodal values.

    The wall time of the original solve is kept next to the values.
    """
    CACHE.mkdir(parents=True, exist_ok=True)
    path = CACHE / f"{_key(spec, config)}.npy"
    grid = spec.grid()
    if path.exists():
        return ScalarField(grid, np.load(path))
    t0 = time.perf_counter()
    field = solve(spec, config).field
    path.with_suffix(".json").write_text(json.dumps({"seconds": time.perf_counter() - t0}))
    tmp = path.with_suffix(".tmp.npy")
    np.save(tmp, field.values)
    tmp.replace(path)
    return field


def solve_seconds(spec: ProblemSpec, config: SolverConfig = SolverConfig()):
    """Recorded wall time of the cached solve, or None when it was not recorded."""
    meta = CACHE / f"{_key(spec, config)}.json"
    return json.loads(meta.read_text())["seconds"] if meta.exists() else None


# acceptance lines are collected here and repeated in the terminal summary
ACCEPTANCE_LINES = []


def _criterion_order(line):
    m = re.match(r"criterion\s+(\d+)(\w*)", line)
    return (int(m.group(1)), m.group(2)) if m else (10 ** 6, line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=_criterion_order):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def tilted():
    """Tilted half-plane minimizers on the three refinement levels."""
    return {n: cached_solve(tilted_spec(n)) for n in (257, 513, 1025)}


@pytest.fixture(scope="session")
def frozen_wavy():
    return cached_solve(frozen_wavy_spec(1025))


@pytest.fixture(scope="session")
def tilted_coarse():
    return cached_solve(tilted_spec(129))
