"""Command-line front end: JSON configs in, JSON/CSV reports out.

Every subcommand writes ``report.json`` into the output directory using a
deterministic serializer (sorted keys, 17 significant digits), so identical
configurations produce byte-identical reports.  Volatile details - wall-clock
timestamps, command line, library versions - go to ``report.meta.json``,
which is excluded from any byte comparison.  Exit codes: 0 success, 1 usage
or configuration error, 2 numerical failure, 3 verification failure (a bound
or verdict the run was asked to certify does not hold).
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import re
import sys
import time
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import __version__
from .concavity import concavity_report, continuity_sweep, log_hessian_field
from .domains import Domain2D
from .eigensolver import WeightedProblem, fundamental_gap, solve_problem
from .errors import NumericalError, UsageError, VerificationError
from .horoconvex import HoroconvexConfig, thresholds, verify_pipeline
from .torsion import level_set_components, power_concavity_check, solve_torsion

_FLOAT_SENTINEL = "\x00f:"


@dataclass
class RunConfig:
    """Resolved invocation: which pipeline to run and with what inputs."""

    command: str
    problem: Optional[str] = None
    domain: Optional[str] = None
    h: Optional[float] = None
    t_grid: Optional[list] = None
    beta: float = 1.0
    k: int = 2
    b: float = 0.0
    margin: Optional[float] = None
    tol: float = 1e-9
    R: Optional[float] = None
    out: str = "."

    def validate(self) -> None:
        if self.h is not None and not self.h > 0.0:
            raise UsageError(f"--h must be positive, got {self.h}")
        for name in ("problem", "domain"):
            path = getattr(self, name)
            if path is not None and not os.path.exists(path):
                raise UsageError(f"--{name} file not found: {path}")

    def echo(self) -> dict:
        cfg = {k: v for k, v in asdict(self).items() if v is not None}
        cfg["schema"] = 1
        return cfg


# ---------------------------------------------------------------------------
# deterministic report serialization
# ---------------------------------------------------------------------------
def _normalize(obj):
    """Recursively convert a report tree to JSON-safe values.

    Floats become sentinel strings carrying their %.17g rendering; a regex
    pass in :func:`dumps_report` strips the quotes again, which pins the
    number format independently of the json module's float repr.
    """
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if not np.isfinite(f):
            raise NumericalError(f"non-finite value {f!r} in report")
        return _FLOAT_SENTINEL + ("%.17g" % f)
    if isinstance(obj, dict):
        return {str(k): _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)) or isinstance(obj, np.ndarray):
        return [_normalize(v) for v in (obj.tolist() if isinstance(obj, np.ndarray) else obj)]
    raise UsageError(f"cannot serialize value of type {type(obj).__name__} into a report")


def dumps_report(payload: dict) -> str:
    text = json.dumps(_normalize(payload), indent=2, sort_keys=True)
    return re.sub(r'"\\u0000f:([^"]*)"', r"\1", text) + "\n"


def write_report(out_dir: str, payload: dict, started: float, argv: list) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "report.json")
    with open(path, "w") as fh:
        fh.write(dumps_report(payload))
    meta = {
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "elapsed_seconds": time.time() - started,
        "argv": list(argv),
        "package_version": __version__,
        "numpy_version": np.__version__,
    }
    with open(os.path.join(out_dir, "report.meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------
def _require(cfg: RunConfig, *names: str) -> None:
    for name in names:
        if getattr(cfg, name) is None:
            raise UsageError(f"{cfg.command} requires --{name.replace('_', '-')}")


def _cmd_solve(cfg: RunConfig, argv, started) -> int:
    _require(cfg, "problem", "h")
    problem = WeightedProblem.load(cfg.problem)
    result = solve_problem(problem, cfg.h, k=cfg.k, tol=cfg.tol)
    payload = {
        "config": cfg.echo(),
        "tolerances": {"residual": cfg.tol},
        "result": result.to_json(),
    }
    path = write_report(cfg.out, payload, started, argv)
    result.save_fields_csv(os.path.join(cfg.out, "fields.csv"))
    print(f"lambda1={result.lambda1:.10g} lambda2={result.lambda2:.10g} "
          f"gap={result.gap:.10g} ({path})")
    return 0


def _cmd_gap(cfg: RunConfig, argv, started) -> int:
    _require(cfg, "problem", "h")
    problem = WeightedProblem.load(cfg.problem)
    gap = fundamental_gap(problem, cfg.h, tol=cfg.tol)
    payload = {
        "config": cfg.echo(),
        "tolerances": {"residual": cfg.tol},
        "result": gap.to_json(),
    }
    path = write_report(cfg.out, payload, started, argv)
    gap.fine.save_fields_csv(os.path.join(cfg.out, "fields.csv"))
    print(f"gap={gap.gap:.10g} (coarse {gap.gap_coarse:.10g}, "
          f"fine {gap.gap_fine:.10g}) ({path})")
    return 0


def _cmd_concavity(cfg: RunConfig, argv, started) -> int:
    _require(cfg, "problem", "h")
    problem = WeightedProblem.load(cfg.problem)
    result = solve_problem(problem, cfg.h, k=2, tol=cfg.tol)
    hfield = log_hessian_field(result, connection=problem.chart, margin=cfg.margin)
    report = concavity_report(hfield, b=cfg.b)
    payload = {
        "config": cfg.echo(),
        "tolerances": {"residual": cfg.tol, "concavity_tol": report.tol_used},
        "eigen": result.to_json(),
        "concavity": report.to_json(),
    }
    path = write_report(cfg.out, payload, started, argv)
    hfield.save_csv(os.path.join(cfg.out, "fields.csv"))
    print(f"verdict={report.verdict} max_hess_eig={report.max_hess_eig:.10g} ({path})")
    if report.verdict == "violated":
        print(f"concavity violated at {report.worst_point}", file=sys.stderr)
        return 3
    if report.verdict != "concave":
        print(f"concavity check inconclusive: {report.verdict}", file=sys.stderr)
        return 2
    return 0


def _cmd_sweep(cfg: RunConfig, argv, started) -> int:
    _require(cfg, "problem", "t_grid")
    problem = WeightedProblem.load(cfg.problem)
    sweep = continuity_sweep(problem, cfg.t_grid, b=cfg.b,
                             h_target=cfg.h, margin=cfg.margin)
    payload = {
        "config": cfg.echo(),
        "tolerances": {"residual": cfg.tol},
        "sweep": sweep.to_json(),
    }
    path = write_report(cfg.out, payload, started, argv)
    sweep.to_csv(os.path.join(cfg.out, "sweep.csv"))
    if sweep.flagged_t is None:
        print(f"concave along the whole family ({path})")
    else:
        print(f"first violation at t={sweep.flagged_t:.10g} ({path})")
    return 0


def _cmd_horoconvex_verify(cfg: RunConfig, argv, started) -> int:
    _require(cfg, "domain")
    domain = Domain2D.load(cfg.domain)
    hconf = HoroconvexConfig(R=cfg.R) if cfg.R is not None else None
    report = verify_pipeline(domain, h_target=cfg.h, margin=cfg.margin, config=hconf)
    payload = {"config": cfg.echo(), "pipeline": report.to_json()}
    path = write_report(cfg.out, payload, started, argv)
    if report.passed:
        print(f"all stages passed: gap={report.gap:.10g} >= "
              f"bound={report.bound:.10g} ({path})")
        return 0
    stage = report.failed_stage()
    detail = ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                       for k, v in stage.details.items())
    print(f"stage {stage.index} ({stage.name}) failed: {detail}", file=sys.stderr)
    return 3


def _cmd_horoconvex_thresholds(cfg: RunConfig, argv, started) -> int:
    values = thresholds(cfg.R) if cfg.R is not None else thresholds()
    payload = {"config": cfg.echo(), "thresholds": values}
    path = write_report(cfg.out, payload, started, argv)
    for key in sorted(values):
        print(f"{key} = {values[key]:.6f}")
    print(f"({path})")
    return 0


def _cmd_torsion(cfg: RunConfig, argv, started) -> int:
    _require(cfg, "domain")
    domain = Domain2D.load(cfg.domain)
    sol = solve_torsion(domain, h_target=cfg.h, beta=cfg.beta)
    report = power_concavity_check(sol, beta=cfg.beta, margin=cfg.margin)
    levels = level_set_components(sol)
    payload = {
        "config": cfg.echo(),
        "tolerances": {"solve_residual": 1e-10, "concavity_tol": report.tol_used},
        "torsion": sol.to_json(),
        "concavity": report.to_json(),
        "level_sets": levels,
    }
    path = write_report(cfg.out, payload, started, argv)
    sol.save_fields_csv(os.path.join(cfg.out, "fields.csv"))
    print(f"max_u={sol.max_value:.10g} verdict={report.verdict} "
          f"levels_connected={levels['all_connected']} ({path})")
    if report.verdict == "violated" or not levels["all_connected"]:
        print("power concavity verification failed", file=sys.stderr)
        return 3
    if report.verdict != "concave":
        print(f"concavity check inconclusive: {report.verdict}", file=sys.stderr)
        return 2
    return 0


_COMMANDS = {
    "solve": _cmd_solve,
    "gap": _cmd_gap,
    "concavity": _cmd_concavity,
    "sweep": _cmd_sweep,
    "horoconvex-verify": _cmd_horoconvex_verify,
    "horoconvex-thresholds": _cmd_horoconvex_thresholds,
    "torsion": _cmd_torsion,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse failures to exit code 1
        raise UsageError(message)


def _parse_t_grid(text: str) -> list:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise UsageError(f"--t-grid must be comma-separated numbers: {exc}") from exc


def build_parser() -> _Parser:
    parser = _Parser(prog="gaplab",
                     description="Spectral-gap and concavity toolkit for "
                                 "conformally deformed planar domains.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def add(name, help_text, *, problem=False, domain=False, h=False,
            t_grid=False, beta=False, k=False, b=False, R=False):
        p = sub.add_parser(name, help=help_text)
        if problem:
            p.add_argument("--problem", help="weighted-problem JSON file")
        if domain:
            p.add_argument("--domain", help="domain JSON file")
        if h:
            p.add_argument("--h", type=float, help="target mesh size")
        if t_grid:
            p.add_argument("--t-grid", dest="t_grid", type=_parse_t_grid,
                           help="comma-separated deformation parameters (include 0 and 1)")
        if beta:
            p.add_argument("--beta", type=float, default=1.0,
                           help="power-concavity exponent parameter (default 1)")
        if k:
            p.add_argument("--k", type=int, default=2,
                           help="number of eigenpairs (1-3, default 2)")
        if b:
            p.add_argument("--b", type=float, default=0.0,
                           help="uniform concavity offset added to the Hessian test")
        if R:
            p.add_argument("--R", type=float, help="stereographic sphere radius")
        p.add_argument("--margin", type=float, help="boundary exclusion margin")
        p.add_argument("--tol", type=float, default=1e-9,
                       help="eigenresidual tolerance (default 1e-9)")
        p.add_argument("--out", default=".", help="output directory (default .)")
        return p

    add("solve", "solve for the lowest eigenpairs", problem=True, h=True, k=True)
    add("gap", "fundamental gap with mesh-halving extrapolation", problem=True, h=True)
    add("concavity", "log-concavity check of the ground state", problem=True, h=True, b=True)
    add("sweep", "continuity sweep over a deformation family",
        problem=True, h=True, t_grid=True, b=True)
    add("horoconvex-verify", "run the horoconvex gap-bound pipeline",
        domain=True, h=True, R=True)
    add("horoconvex-thresholds", "print the admissibility thresholds", R=True)
    add("torsion", "torsion solve plus power-concavity check",
        domain=True, h=True, beta=True)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(command=args.command)
    for name in ("problem", "domain", "h", "t_grid", "beta", "k", "b",
                 "margin", "tol", "R", "out"):
        if hasattr(args, name) and getattr(args, name) is not None:
            setattr(cfg, name, getattr(args, name))
    cfg.validate()
    return cfg


def run(cfg: RunConfig, argv: Optional[list] = None) -> int:
    if cfg.command not in _COMMANDS:
        raise UsageError(f"unknown command {cfg.command!r}")
    cfg.validate()
    return _COMMANDS[cfg.command](cfg, argv or [cfg.command], time.time())


def main(argv: Optional[list] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        cfg = config_from_args(args)
        return _COMMANDS[cfg.command](cfg, argv, time.time())
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return getattr(exc, "exit_code", 1)
    except VerificationError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return getattr(exc, "exit_code", 3)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        trace = getattr(exc, "trace", None)
        if trace:
            print(f"trace: {trace}", file=sys.stderr)
        return getattr(exc, "exit_code", 2)


if __name__ == "__main__":
    sys.exit(main())
