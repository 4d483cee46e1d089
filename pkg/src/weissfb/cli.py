"""Command-line front end: ``weissfb <subcommand> --config run.json --out dir``.

Every subcommand writes ``report.json`` (validated against the shipped
schema) next to its CSV artifacts.  Exit codes: 0 success, 2 configuration
error, 3 solver non-convergence, 4 diagnostic finding.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from . import __version__
from .errors import (DomainError, NonConvergenceError, ParameterError, RefusalError, ResolutionError,
                     WeissFBError)
from .field import ScalarField, extract_free_boundary, read_field_csv, write_field_csv
from .physics import BoundaryData, ProblemSpec, VorticityModel, compute_R0

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_FINDING = 4

COMMANDS = ("solve", "weiss", "blowup", "flatness", "boundary", "verify", "oracle", "calibrate")


class ConfigError(WeissFBError):
    """The run configuration is malformed; ``pointer`` names the offending key."""

    def __init__(self, message: str, pointer: str = ""):
        super().__init__(message)
        self.pointer = pointer


def _schema(name: str) -> Dict[str, Any]:
    text = resources.files("weissfb").joinpath("schemas", name).read_text()
    return json.loads(text)


def _validate(instance, schema_name: str) -> None:
    import jsonschema

    validator = jsonschema.Draft202012Validator(_schema(schema_name))
    errors = sorted(validator.iter_errors(instance), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        pointer = "/" + "/".join(str(p) for p in err.absolute_path)
        raise ConfigError(f"{schema_name}: {err.message} at {pointer}", pointer)


def threads() -> int:
    """Worker cap from ``WEISSFB_THREADS`` (default 1)."""
    raw = os.environ.get("WEISSFB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"WEISSFB_THREADS must be an integer, got {raw!r}", "WEISSFB_THREADS")
    if n < 1:
        raise ConfigError("WEISSFB_THREADS must be >= 1", "WEISSFB_THREADS")
    return n


@dataclass
class RunConfig:
    """Parsed run configuration (see ``schemas/config.schema.json``)."""

    spec: ProblemSpec
    solver: Any
    coarse_n: int = 65
    weiss_radii: Optional[List[float]] = None
    blowup_scales: Optional[List[float]] = None
    flatness_radius: Optional[float] = None
    boundary_window: Optional[float] = None
    constants: Optional[str] = None
    field_path: Optional[str] = None
    output: str = "out"
    seed: int = 0
    raw: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: Dict[str, Any], grid_n: Optional[int] = None, seed: Optional[int] = None,
                  output: Optional[str] = None) -> "RunConfig":
        from .minimizer import SolverConfig

        _validate(d, "config.schema.json")
        prob = d.get("problem", {})
        X0 = tuple(prob.get("X0", (1.0, -1.0)))
        R0 = prob.get("R0")
        try:
            rmax = compute_R0(X0)
        except WeissFBError as exc:
            raise ConfigError(str(exc), "/problem/X0")
        if R0 is not None and R0 > rmax * (1 + 1e-12):
            raise ConfigError(f"R0={R0} exceeds the admissible radius {rmax}", "/problem/R0")
        margin = float(prob.get("margin", 0.0))
        g = d.get("grid", {})
        if "n" in g and "h" in g:
            raise ConfigError("give either grid.n or grid.h, not both", "/grid")
        if grid_n is not None:
            n = int(grid_n)
        elif "h" in g:
            width = 2 * (rmax if R0 is None else R0) * (1 + margin)
            n = int(round(width / g["h"])) + 1
        else:
            n = int(g.get("n", 129))
        if n < 5:
            raise ConfigError("grid size must be >= 5", "/grid/n")
        try:
            vort = VorticityModel.from_dict(prob.get("vorticity", {"kind": "zero"}))
        except WeissFBError as exc:
            raise ConfigError(str(exc), "/problem/vorticity")
        try:
            bd = BoundaryData.from_dict(d.get("boundary", {}))
        except WeissFBError as exc:
            raise ConfigError(str(exc), "/boundary")
        try:
            spec = ProblemSpec(X0, R0, vort, bd, grid_n=n, domain=prob.get("domain", "ball"),
                               frozen=bool(prob.get("frozen", False)), margin=margin)
        except WeissFBError as exc:
            raise ConfigError(str(exc), "/problem")
        sd = dict(d.get("solver", {}))
        coarse_n = int(sd.pop("coarse_n", 65))
        try:
            solver = SolverConfig.from_dict(sd)
        except (WeissFBError, TypeError) as exc:
            raise ConfigError(str(exc), "/solver")
        diag = d.get("diagnostics", {})
        h = spec.grid().h
        radii = diag.get("weiss_radii")
        if radii is not None:
            for k, r in enumerate(radii):
                if r < 4 * h or r > spec.R0:
                    raise ConfigError(f"weiss radius {r} outside [4h, R0] = [{4 * h}, {spec.R0}]",
                                      f"/diagnostics/weiss_radii/{k}")
        scales = diag.get("blowup_scales")
        if scales is not None:
            for k, r in enumerate(scales):
                if r < 8 * h or r > spec.R0:
                    raise ConfigError(f"blow-up scale {r} outside [8h, R0] = [{8 * h}, {spec.R0}]",
                                      f"/diagnostics/blowup_scales/{k}")
        fr = diag.get("flatness_radius")
        if fr is not None and (fr < 16 * h or fr > spec.R0):
            raise ConfigError(f"flatness radius {fr} outside [16h, R0]", "/diagnostics/flatness_radius")
        bw = diag.get("boundary_window")
        if bw is not None and (bw < 4 * h or bw > spec.R0):
            raise ConfigError(f"boundary window {bw} outside [4h, R0]", "/diagnostics/boundary_window")
        return cls(spec, solver, coarse_n, radii, scales, fr, bw, diag.get("constants"), diag.get("field"),
                   output if output is not None else d.get("output", "out"),
                   int(seed if seed is not None else d.get("seed", 0)), d)

    def effective(self) -> Dict[str, Any]:
        """The configuration as it was actually run (overrides applied)."""
        s = self.spec
        return {
            "problem": {"X0": list(s.X0), "R0": s.R0, "vorticity": s.vorticity.to_dict(),
                        "frozen": s.frozen, "domain": s.domain, "margin": s.margin},
            "grid": {"n": s.grid_n},
            "boundary": s.boundary.to_dict(),
            "solver": dict(self.solver.to_dict(), coarse_n=self.coarse_n),
            "diagnostics": {"weiss_radii": self.weiss_radii, "blowup_scales": self.blowup_scales,
                            "flatness_radius": self.flatness_radius, "boundary_window": self.boundary_window,
                            "constants": self.constants, "field": self.field_path},
            "output": self.output,
            "seed": self.seed,
        }


def load_config(path: Optional[str], grid_n=None, seed=None, output=None) -> RunConfig:
    if path is None:
        d: Dict[str, Any] = {}
    else:
        try:
            with open(path) as fh:
                d = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", "")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}", "")
    return RunConfig.from_dict(d, grid_n, seed, output)


# ---------------------------------------------------------------- helpers

@dataclass
class Outcome:
    results: Dict[str, Any] = field(default_factory=dict)
    findings: List[Dict[str, Any]] = field(default_factory=list)
    artifacts: List[str] = field(default_factory=list)
    grid: Optional[Dict[str, Any]] = None

    def finding(self, check: str, passed: bool, value=None, threshold=None, detail: str = "") -> None:
        item = {"check": check, "passed": bool(passed), "value": _num(value), "threshold": _num(threshold)}
        if detail:
            item["detail"] = detail
        self.findings.append(item)


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def _clean(obj):
    """JSON-safe copy: numpy scalars to floats, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return obj


def _field(cfg: RunConfig, out: Outcome) -> ScalarField:
    """Load the configured field or solve for it."""
    if cfg.field_path:
        try:
            psi = read_field_csv(cfg.field_path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read field: {exc}", "/diagnostics/field")
        out.results["field_source"] = cfg.field_path
    else:
        from .minimizer import solve

        res = solve(cfg.spec, cfg.solver, cfg.coarse_n)
        psi = res.field
        out.results["field_source"] = "solve"
        out.results["iterations"] = res.iterations
    out.grid = {"n": int(psi.grid.nx), "h": float(psi.grid.h)}
    return psi


def _fb_center(psi: ScalarField, X0):
    fb = extract_free_boundary(psi)
    if len(fb.midpoints()) == 0:
        raise RefusalError("the field has no free boundary")
    return tuple(float(c) for c in fb.nearest_point(X0))


def _constants(cfg: RunConfig):
    from .regularity import RegularityConfig

    if cfg.constants is None:
        return RegularityConfig()
    try:
        return RegularityConfig.read_json(cfg.constants)
    except (OSError, ValueError, ParameterError) as exc:
        raise ConfigError(f"cannot read constants: {exc}", "/diagnostics/constants")


def _regularity_problem(cfg: RunConfig, psi: ScalarField):
    from .regularity import GeneralFBP

    if cfg.spec.frozen:
        return GeneralFBP.frozen(1.0), cfg.spec.slope
    return GeneralFBP.axisymmetric(cfg.spec.vorticity, psi), cfg.spec.slope


# ------------------------------------------------------------- subcommands

def cmd_solve(cfg: RunConfig, outdir: Path, out: Outcome) -> None:
    from .minimizer import discrete_energy, evaluate_J, solve
    from .regularity import lipschitz_ratio

    res = solve(cfg.spec, cfg.solver, cfg.coarse_n)
    psi = res.field
    out.grid = {"n": int(psi.grid.nx), "h": float(psi.grid.h)}
    write_field_csv(psi, outdir / "field.csv")
    out.artifacts.append("field.csv")
    try:
        lip = lipschitz_ratio(psi)
    except DomainError:
        lip = None
    out.results.update({"J": evaluate_J(psi, cfg.spec), "discrete_energy": discrete_energy(psi, cfg.spec),
                        "iterations": res.iterations, "levels": list(res.levels), "lipschitz_ratio": lip,
                        "positive_nodes": int(np.count_nonzero(psi.values > 0))})


def cmd_weiss(cfg: RunConfig, outdir: Path, out: Outcome) -> None:
    from .weiss import estimate_limit, weiss_report

    psi = _field(cfg, out)
    rep = weiss_report(psi, cfg.spec.X0, cfg.weiss_radii, cfg.spec.vorticity, cfg.spec.R0, workers=threads())
    rep.write_csv(outdir / "weiss.csv")
    out.artifacts.append("weiss.csv")
    out.results["last_density"] = float(rep.density[-1]) if len(rep.radii) else None
    try:
        lim = estimate_limit(rep)
        out.results.update({"D0": lim.D0, "density0": lim.density0})
    except ParameterError as exc:
        out.results["limit"] = str(exc)


def cmd_blowup(cfg: RunConfig, outdir: Path, out: Outcome) -> None:
    from .blowup import blowup_sequence

    psi = _field(cfg, out)
    seq = blowup_sequence(psi, cfg.spec.X0, cfg.blowup_scales, cfg.spec.R0)
    seq.write_csv(outdir / "blowup.csv")
    out.artifacts.append("blowup.csv")
    if seq.rate is not None:
        out.results.update({"gamma_hat": seq.rate.gamma, "rate_r2": seq.rate.r2})
    out.results["final_slope"] = float(seq.slopes[-1]) if len(seq.slopes) else None


def cmd_flatness(cfg: RunConfig, outdir: Path, out: Outcome) -> None:
    from .regularity import flatness_iteration

    psi = _field(cfg, out)
    consts = _constants(cfg)
    problem, slope = _regularity_problem(cfg, psi)
    center = _fb_center(psi, cfg.spec.X0)
    R = cfg.flatness_radius if cfg.flatness_radius is not None else cfg.spec.R0 / 2
    sched = flatness_iteration(psi, problem, consts, center, R, slope)
    sched.write_csv(outdir / "flatness.csv")
    out.artifacts.append("flatness.csv")
    out.results.update({"center": list(center), "radius": R, "passing_levels": sched.passing_levels,
                        "failure": sched.failure, "failure_scale": sched.failure_scale,
                        "cauchy_sum": sched.cauchy_sum, "cauchy_bound": sched.cauchy_bound})
    out.finding("direction_steps", sched.direction_steps_ok(), sched.cauchy_sum, sched.cauchy_bound)


def cmd_boundary(cfg: RunConfig, outdir: Path, out: Outcome) -> None:
    from .regularity import best_direction, extract_graph

    psi = _field(cfg, out)
    center = _fb_center(psi, cfg.spec.X0)
    window = cfg.boundary_window if cfg.boundary_window is not None else cfg.spec.R0 / 4
    nu, eps = best_direction(psi, center, window * math.sqrt(2), slope=cfg.spec.slope)
    graph = extract_graph(psi, center, nu, window)
    graph.write_csv(outdir / "boundary.csv")
    out.artifacts.append("boundary.csv")
    out.results.update({"center": list(center), "nu": [float(nu[0]), float(nu[1])], "flatness": eps,
                        "lipschitz": graph.lipschitz, "holder_exponent": graph.holder_exponent,
                        "holder_constant": graph.holder_constant})
    out.finding("single_valued", not graph.multivalued)


def cmd_verify(cfg: RunConfig, outdir: Path, out: Outcome) -> None:
    from .regularity import check_flatness, best_direction, lipschitz_ratio, viscosity_check
    from .weiss import weiss_report

    psi = _field(cfg, out)
    spec = cfg.spec
    h = psi.grid.h
    out.finding("nonnegative", float(psi.values.min()) >= 0, float(psi.values.min()), 0.0)
    if not cfg.field_path:
        trace = spec.trace(psi.grid).values
        from .minimizer import DiscreteProblem

        fixed = ~DiscreteProblem(spec, psi.grid).unknown
        dev = float(np.max(np.abs(psi.values[fixed] - trace[fixed]))) if fixed.any() else 0.0
        out.finding("trace_match", dev <= 1e-12, dev, 1e-12)
    try:
        lip = lipschitz_ratio(psi)
        out.finding("lipschitz_ratio_finite", math.isfinite(lip), lip)
    except DomainError as exc:
        out.finding("lipschitz_ratio_finite", False, detail=str(exc))
    rep = weiss_report(psi, spec.X0, cfg.weiss_radii, spec.vorticity, spec.R0, workers=threads())
    try:
        rep.check()
        out.finding("weiss_recomposition", True)
    except ParameterError as exc:
        out.finding("weiss_recomposition", False, detail=str(exc))
    dens_ok = bool(np.all((rep.density >= 0) & (rep.density <= 1)))
    out.finding("density_range", dens_ok)
    if not np.any(psi.values > 0):
        return
    problem, slope = _regularity_problem(cfg, psi)
    try:
        vis = viscosity_check(psi, problem, spec.X0, spec.R0 / 2)
        out.finding("interior_residual", vis.interior_max <= h, vis.interior_max, h)
    except (ParameterError, DomainError) as exc:
        out.finding("interior_residual", False, detail=str(exc))
    consts = _constants(cfg)
    try:
        center = _fb_center(psi, spec.X0)
        R = cfg.flatness_radius if cfg.flatness_radius is not None else spec.R0 / 2
        nu, _ = best_direction(psi, center, R, slope=slope)
        cert = check_flatness(psi, center, R, nu, consts.eps_bar, slope)
        out.finding("initial_flatness", cert.passed, cert.margin, 0.0)
    except (RefusalError, DomainError) as exc:
        out.finding("initial_flatness", False, detail=str(exc))


def cmd_oracle(cfg: RunConfig, outdir: Path, out: Outcome) -> None:
    from .minimizer import DiscreteProblem, minimize, oracle_1d, oracle_small, small_corpus

    rows = []
    for k, spec in enumerate(small_corpus(20, cfg.seed)):
        orc = oracle_small(spec)
        got = minimize(spec, cfg.solver)
        prob = DiscreteProblem(spec)
        pattern = got.values[prob.unknown] > 0
        de = abs(prob.energy(got.values) - orc.energy)
        same = bool(np.array_equal(pattern, orc.pattern))
        rows.append((k, int(same), de))
        out.finding(f"oracle_small[{k}]", same and de <= 1e-8, de, 1e-8)
    with open(outdir / "oracle.csv", "w") as fh:
        fh.write("instance,pattern_match,energy_diff\n")
        for k, same, de in rows:
            fh.write(f"{k},{same},{de:.17g}\n")
    out.artifacts.append("oracle.csv")
    # one-dimensional reduction: extruded data on a box
    spec = ProblemSpec((1.0, -1.0), None, VorticityModel.zero(),
                       BoundaryData("extruded", slope=1.0, top_value=0.25), grid_n=129, domain="box",
                       frozen=True)
    from .minimizer import solve

    psi = solve(spec, cfg.solver, cfg.coarse_n).field
    g = psi.grid
    col = psi.values[:, g.nx // 2]
    depth = g.y_max - g.ys
    pos = col > 0
    fb = float(depth[pos].max()) if pos.any() else 0.0
    ref = oracle_1d(0.25, 1.0, g.y_max - g.y_min)
    err = abs(fb - ref.fb_location)
    out.finding("oracle_1d", err <= 4 * g.h, err, 4 * g.h)
    out.results.update({"instances": len(rows), "matches": sum(r[1] for r in rows),
                        "fb_1d": fb, "fb_1d_oracle": ref.fb_location})


def cmd_calibrate(cfg: RunConfig, outdir: Path, out: Outcome) -> None:
    from .regularity import calibrate

    rep = calibrate(seed=cfg.seed)
    rep.config.write_json(outdir / "constants.json")
    out.artifacts.append("constants.json")
    out.results.update(rep.config.to_dict())
    out.results["cases"] = len(rep.cases)


HANDLERS = {"solve": cmd_solve, "weiss": cmd_weiss, "blowup": cmd_blowup, "flatness": cmd_flatness,
            "boundary": cmd_boundary, "verify": cmd_verify, "oracle": cmd_oracle, "calibrate": cmd_calibrate}


# ------------------------------------------------------------------ driver

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="weissfb", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"weissfb {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--seed", type=int, help="seed for randomized parts (overrides the config)")
        sp.add_argument("--grid-n", type=int, dest="grid_n", help="grid size override")
    return p


def write_report(outdir: Path, report: Dict[str, Any]) -> None:
    _validate(report, "report.schema.json")
    with open(outdir / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run(command: str, cfg: RunConfig, outdir: Optional[Path] = None) -> int:
    """Execute one subcommand; returns the exit status."""
    outdir = Path(cfg.output if outdir is None else outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    out = Outcome()
    status, code = "ok", EXIT_OK
    try:
        HANDLERS[command](cfg, outdir, out)
        if any(not f["passed"] for f in out.findings):
            status, code = "finding", EXIT_FINDING
    except ConfigError:
        raise
    except NonConvergenceError as exc:
        status, code = "non-convergence", EXIT_NONCONVERGENCE
        out.finding("convergence", False, detail=str(exc))
    except (RefusalError, DomainError, ResolutionError) as exc:
        status, code = "finding", EXIT_FINDING
        out.finding(type(exc).__name__, False, getattr(exc, "margin", None), detail=str(exc))
    report = _clean({"command": command, "status": status, "exit_code": code, "version": __version__,
                     "config": cfg.effective(), "grid": out.grid, "results": out.results,
                     "findings": out.findings, "artifacts": out.artifacts})
    write_report(outdir, report)
    if code == EXIT_FINDING:
        json.dump([f for f in report["findings"] if not f["passed"]], sys.stdout, indent=2)
        sys.stdout.write("\n")
    return code


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        sys.stderr.write("error: --seed must be an unsigned 64-bit integer\n")
        return EXIT_CONFIG
    try:
        threads()
        cfg = load_config(args.config, args.grid_n, args.seed, args.out)
        return run(args.command, cfg)
    except ConfigError as exc:
        sys.stderr.write(f"config error at {exc.pointer or '/'}: {exc}\n")
        return EXIT_CONFIG
    except ParameterError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
