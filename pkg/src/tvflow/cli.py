"""Command line: ``solve``, ``verify``, ``theorems``, ``decay`` and ``info``.

Exit status is 0 when every selected check passes, 1 on a numerical
failure (the failing stage is named on stderr) and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import os
import platform
import sys
from fractions import Fraction

import numpy as np

from . import __version__
from .config import EXPERIMENTS, OUTPUT_DIR_ENV, FieldSpec, RunConfig, load_config, \
    normalize, parse_config, serialize
from .entropy import entropy_report
from .errors import SolverFailure, TVFlowError
from .grid import Grid2D, ScalarField, Shape, make_field
from .solvers import InnerOptions, SolveConfig, evolve
from .storage import load_field, load_trajectory, save_trajectory, write_entropy_report, \
    write_experiment_report
from .theorems import (
    boundedness_check, comparison_experiment, contraction_experiment, decay_exponents,
    decay_experiment, gn_check, l1_bound_check, regularity_cauchy_experiment, uniqueness_proxy,
)

#: Used by ``theorems`` when no ``--config`` is given.
DEFAULT_CONFIG = """\
nx = 32
T = 0.02
tau = 0.002
u0 = disk 0.5 0.5 0.25 1
"""


class UsageError(Exception):
    pass


class CheckFailed(Exception):
    def __init__(self, stage, message):
        super().__init__(message)
        self.stage = stage


# -- config -> solver objects ------------------------------------------------


def grid_of(cfg: RunConfig, n: int | None = None) -> Grid2D:
    if n is None:
        return Grid2D(cfg.nx, cfg.ny, cfg.h)
    return Grid2D(n, n * cfg.ny // cfg.nx, cfg.h * cfg.nx / n)


def build_field(spec: FieldSpec, grid: Grid2D) -> ScalarField:
    a = spec.args
    if spec.kind == "file":
        return load_field(a[0], grid)
    if spec.kind == "zero":
        return ScalarField.zeros(grid)
    shape = {
        "constant": lambda: Shape.constant(a[0]),
        "disk": lambda: Shape.disk(a[:2], a[2], a[3]),
        "square": lambda: Shape.square(a[:2], a[2], a[3]),
        "step": lambda: Shape.step(a[0], a[1]),
        "spike": lambda: Shape.spike(a[:2], a[2], a[3]),
        "random": lambda: Shape.random(int(a[0]), a[1]),
    }[spec.kind]()
    return make_field(grid, shape)


def solve_config(cfg: RunConfig, grid: Grid2D | None = None, tau: float | None = None,
                 u0_key: str = "u0", f_key: str = "f") -> SolveConfig:
    grid = grid_of(cfg) if grid is None else grid
    lvl = cfg.ladder
    return SolveConfig(
        grid, cfg.T, cfg.tau if tau is None else tau,
        build_field(cfg[u0_key], grid), build_field(cfg[f_key], grid),
        ladder_level=None if lvl == "none" else lvl,
        inner=InnerOptions(max_iters=cfg.max_iters, gap_tol=cfg.gap_tol, norm=cfg.norm),
        snapshots=None if cfg.snapshots == "all" else cfg.snapshots,
    )


def _read_config(path: str | None, default: str | None = None) -> RunConfig:
    if path is None:
        if default is None:
            raise UsageError("--config is required")
        return parse_config(default)
    return load_config(path)


# -- experiments -------------------------------------------------------------


def _ordered_pair(cfg: RunConfig):
    """Pointwise min and max of the two configured data, which are ordered."""
    sc = solve_config(cfg)
    g = sc.grid
    a0, fa = sc.u0.values, build_field(cfg.f, g).values
    b0, fb = build_field(cfg.u0_b, g).values, build_field(cfg.f_b, g).values
    lo = (ScalarField(g, np.minimum(a0, b0)), ScalarField(g, np.minimum(fa, fb)))
    hi = (ScalarField(g, np.maximum(a0, b0)), ScalarField(g, np.maximum(fa, fb)))
    return lo, hi, sc


def run_experiment(name: str, cfg: RunConfig) -> list:
    """Reports for one named experiment on the configured data."""
    if name == "contraction":
        sc = solve_config(cfg)
        data2 = (build_field(cfg.u0_b, sc.grid), build_field(cfg.f_b, sc.grid))
        return [contraction_experiment((sc.u0, sc.f), data2, sc)]
    if name == "comparison":
        lo, hi, sc = _ordered_pair(cfg)
        return [comparison_experiment(lo, hi, sc)]
    if name in ("l1_bound", "boundedness"):
        traj = evolve(solve_config(cfg))
        return [l1_bound_check(traj) if name == "l1_bound" else boundedness_check(traj)]
    if name == "decay":
        sc = solve_config(cfg)
        return [decay_experiment(sc.u0, decay_exponents(2, cfg.r0, cfg.r), sc)]
    if name == "regularity":
        n, m = (int(x) for x in cfg.levels)
        return [regularity_cauchy_experiment(cfg.r, n, m, solve_config(cfg))]
    if name == "gn":
        if any(cfg[k].kind == "file" for k in ("u0", "f")):
            raise UsageError("gn needs shape-described data (it refines the grid)")
        trajs = [evolve(solve_config(cfg, grid_of(cfg, cfg.nx // 2), 2 * cfg.tau)),
                 evolve(solve_config(cfg))]
        return [gn_check(trajs, cfg.gn_k)]
    if name == "uniqueness":
        return [uniqueness_proxy(solve_config(cfg), cfg.p_schedule)]
    raise UsageError(f"unknown experiment {name!r}")


# -- subcommands -------------------------------------------------------------


def cmd_solve(args) -> int:
    cfg = _read_config(args.config)
    out = cfg.output_dir(args.out)
    try:
        traj = evolve(solve_config(cfg))
    except SolverFailure as exc:
        raise CheckFailed("solve", str(exc)) from exc
    index = save_trajectory(traj, out)
    with open(os.path.join(out, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(serialize(cfg))
    gaps = [r.gap for r in traj.step_log]
    print(f"solve: {len(traj)} snapshots, {len(traj.step_log)} steps, "
          f"max gap {max(gaps, default=0.0):.3e}, index {index}")
    return 0


def cmd_verify(args) -> int:
    cfg = _read_config(args.config) if args.config else None
    grid = grid_of(cfg) if cfg else None
    f = solve_config(cfg).f if cfg else None
    traj = load_trajectory(args.trajectory, grid, f)
    ks = cfg.ks if cfg else tuple(float(k) for k in args.ks.split(","))
    report = entropy_report(traj, traj.ladder.f, ks)
    path = args.out or os.path.join(args.trajectory, "entropy_report.csv")
    write_entropy_report(report, path)
    excess = float(np.nanmax(report.column("zbound_excess"))) if traj.duals else 0.0
    gaps = report.column("pairing_gap")
    worst_gap = float(np.nanmin(gaps)) if len(gaps) and not np.all(np.isnan(gaps)) else 0.0
    ok = excess <= 1e-10 and worst_gap >= -1e-10
    print(f"{'PASS' if ok else 'FAIL'} verify rows={len(report.rows)} "
          f"zbound_excess={excess:.3e} min_pairing_gap={worst_gap:.3e} report={path}")
    if not ok:
        raise CheckFailed("verify", "vector field leaves the unit ball or pairing gap negative")
    return 0


def cmd_theorems(args) -> int:
    cfg = _read_config(args.config, DEFAULT_CONFIG)
    if args.only:
        names = tuple(n.strip() for n in args.only.split(",") if n.strip())
    else:
        names = cfg.experiments or EXPERIMENTS
    for n in names:
        if n not in EXPERIMENTS:
            raise UsageError(f"unknown experiment {n!r} (choose from {', '.join(EXPERIMENTS)})")
    failed = []
    for name in names:
        try:
            reports = run_experiment(name, cfg)
        except SolverFailure as exc:
            print(f"FAIL {name} solver: {exc}")
            failed.append(name)
            continue
        for rep in reports:
            print(rep.summary())
            if args.out:
                os.makedirs(args.out, exist_ok=True)
                write_experiment_report(rep, os.path.join(args.out, f"{rep.name}.csv"))
            if not rep.passed:
                failed.append(rep.name)
    if failed:
        raise CheckFailed("theorems", "failed: " + ", ".join(failed))
    return 0


def _number(s: str):
    try:
        return Fraction(s)
    except ValueError:
        raise UsageError(f"not a number: {s!r}") from None


def _fmt_exact(x) -> str:
    if isinstance(x, Fraction):
        return str(x)
    return f"{float(x):.12g}"


def cmd_decay(args) -> int:
    params = decay_exponents(_number(args.N), _number(args.r0), _number(args.r))
    print(f"h0={_fmt_exact(params.h0)} h1={_fmt_exact(params.h1)} C={params.C:.12g}")
    if not args.run:
        return 0
    if params.N != 2:
        raise UsageError("the dynamic check needs --N 2")
    grid = Grid2D.unit_square(args.n)
    u0 = make_field(grid, Shape.disk((0.5, 0.5), 0.25, 1.0))
    tau = args.tau if args.tau else args.T / 125
    report = decay_experiment(u0, params, SolveConfig(grid, args.T, tau, u0))
    print(report.summary())
    if not report.passed:
        raise CheckFailed("decay", "decay bound violated")
    return 0


def cmd_info(args) -> int:
    import numba
    import scipy

    print(f"tvflow {__version__}")
    print(f"python {platform.python_version()} numpy {np.__version__} scipy {scipy.__version__} "
          f"numba {numba.__version__}")
    print(f"output directory variable: {OUTPUT_DIR_ENV}"
          f"={os.environ.get(OUTPUT_DIR_ENV, '(unset)')}")
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
        cfg = parse_config(text)
        print(f"output directory: {cfg.output_dir()}")
        sys.stdout.write(normalize(text))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tvflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run the flow and write snapshots")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help=f"output directory (default: ${OUTPUT_DIR_ENV} or output_dir)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="entropy diagnostics for a saved trajectory")
    p.add_argument("trajectory", help="directory written by solve")
    p.add_argument("--config", help="config of the run (grid, source, ks)")
    p.add_argument("--ks", default="0.25,1,4", help="truncation levels without --config")
    p.add_argument("--out", help="CSV path (default: inside the trajectory directory)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("theorems", help="run theorem experiments")
    p.add_argument("--config")
    p.add_argument("--only", help="comma-separated subset of: " + ", ".join(EXPERIMENTS))
    p.add_argument("--out", help="directory for per-experiment CSV tables")
    p.set_defaults(func=cmd_theorems)

    p = sub.add_parser("decay", help="decay exponents, optionally checked on the disk")
    p.add_argument("--N", required=True)
    p.add_argument("--r0", required=True)
    p.add_argument("--r", required=True)
    p.add_argument("--run", action="store_true", help="run the dynamic check (N = 2)")
    p.add_argument("--n", type=int, default=64, help="grid size for --run")
    p.add_argument("--T", type=float, default=0.125)
    p.add_argument("--tau", type=float, default=None)
    p.set_defaults(func=cmd_decay)

    p = sub.add_parser("info", help="versions and config echo")
    p.add_argument("--config")
    p.set_defaults(func=cmd_info)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CheckFailed as exc:
        print(f"error [{exc.stage}]: {exc}", file=sys.stderr)
        return 1
    except SolverFailure as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1
    except (UsageError, TVFlowError, OSError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
