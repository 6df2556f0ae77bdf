"""Command-line entry point.

Subcommands: ``calibrate``, ``op``, ``norm``, ``verify`` and ``refine``.
Exit codes: 0 success, 2 usage or configuration error (raised before any
compute), 3 data error (unreadable or mismatched files), 4 a suite failed
or raised.
"""
from __future__ import annotations

import argparse
import logging
import sys
from importlib import resources
from pathlib import Path

from .errors import ConvergenceError, DataError, InputError, RefusalError
from .groups import get_group, load_or_calibrate, read_calibration, write_calibration
from .lattice import Ball, BallFamily, GridFunction, dyadic_radii, read_grid, write_grid
from .norms import lip_beta_p_norm, lipschitz_seminorm, lp_norm, morrey_norm, weak_quasinorm
from .operators import MaximalRequest, evaluate
from .verify import runner
from .verify.reports import render_csv, render_records, write_reports

log = logging.getLogger("carnotmax")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_FAIL = 0, 2, 3, 4
GROUPS = ("euclidean1", "euclidean2", "heisenberg1")
OPERATORS = {"M": "HL", "Malpha": "fractional", "Mb": "commutator", "bM": "nonlinear", "MB0": "local"}
NORMS = ("lp", "weak", "morrey", "lipschitz", "lip")


def default_config() -> Path:
    return Path(str(resources.files("carnotmax") / "data" / "default.ini"))


def _numbers(text: str) -> tuple[float, ...]:
    try:
        return runner.parse_numbers(text)
    except InputError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _number(text: str) -> float:
    try:
        return runner.parse_number(text)
    except InputError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="run configuration (default: packaged default.ini)")
    common.add_argument("--group", choices=GROUPS, default=None, help="restrict to one group")
    common.add_argument("--seed", type=int, default=None, help="override the configured seed")
    common.add_argument("--workers", type=int, default=None, help="worker processes")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="carnotmax", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("calibrate", parents=[common], help="compute c0 and c1 and write the calibration cache")

    op = sub.add_parser("op", parents=[common], help="apply a maximal operator to a grid file")
    op.add_argument("operator", choices=sorted(OPERATORS))
    op.add_argument("input", type=Path, help="grid file holding f")
    op.add_argument("output", type=Path, help="grid file to write")
    op.add_argument("--alpha", type=_number, default=0.0)
    op.add_argument("--symbol", type=Path, help="grid file holding b (Mb, bM)")
    op.add_argument("--mode", choices=("centered", "containing"), default="centered")
    op.add_argument("--radii", type=_numbers, default=None, help="comma-separated ball radii")
    op.add_argument("--ball", type=_numbers, default=None, help="B0 for MB0 as centre coordinates then radius")
    op.add_argument("--binary", action="store_true", help="write little-endian float64 values")

    norm = sub.add_parser("norm", parents=[common], help="evaluate a norm of a grid file")
    norm.add_argument("kind", choices=NORMS)
    norm.add_argument("input", type=Path)
    norm.add_argument("--p", type=_number, default=1.0, help="exponent (inf allowed for lp and lip)")
    norm.add_argument("--lam", type=_number, default=0.0, help="Morrey lambda")
    norm.add_argument("--beta", type=_number, default=0.5, help="Lipschitz order")
    norm.add_argument("--radii", type=_numbers, default=None, help="ball family radii")

    for name, text in (("verify", "run every configured suite"), ("refine", "halve h for every regression constant")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--timings", action="store_true", help="include runtimes in the outputs")
        if name == "verify":
            p.add_argument("--freeze", action="store_true",
                           help="record the regression constants of this run in the configured store")
    return parser


def _load(args) -> runner.RunConfig:
    return runner.load_config(args.config or default_config())


def _out_dir(args, config: runner.RunConfig) -> Path:
    return args.out if args.out is not None else Path(config.out)


def _calibration_path(args, config: runner.RunConfig) -> Path:
    path = Path(config.calibration)
    return path if path.is_absolute() else _out_dir(args, config) / path


def _groups(args, config: runner.RunConfig) -> tuple[str, ...]:
    if args.group is None:
        return config.groups
    return (args.group,)


def _workers(args, config: runner.RunConfig) -> int:
    workers = config.workers if args.workers is None else args.workers
    if workers < 1:
        raise InputError(f"--workers must be >= 1, got {workers}")
    return workers


def cmd_calibrate(args) -> int:
    config = _load(args)
    path = _calibration_path(args, config)
    path.parent.mkdir(parents=True, exist_ok=True)
    seed = 0 if args.seed is None else args.seed
    for name in _groups(args, config):
        get_group(name)
        load_or_calibrate(name, path, seed=seed)
    # rewrite in canonical order so repeated runs give identical bytes
    write_calibration(path, read_calibration(path))
    for line in path.read_text().splitlines():
        print(line)
    return EXIT_OK


def _core_bounds(f: GridFunction) -> str:
    pts = f.lattice.points[f.mask]
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    return " ".join(f"[{a:.17g}, {b:.17g}]" for a, b in zip(lo, hi))


def cmd_op(args) -> int:
    variant = OPERATORS[args.operator]
    if args.operator != "Malpha" and args.alpha != 0.0:
        raise InputError("--alpha only applies to Malpha")
    if variant in ("commutator", "nonlinear") and args.symbol is None:
        raise InputError(f"{args.operator} needs --symbol")
    if variant == "local" and args.ball is None:
        raise InputError("MB0 needs --ball")
    f = read_grid(args.input)
    b = read_grid(args.symbol) if args.symbol is not None else None
    ball = None
    if args.ball is not None:
        dim = f.lattice.group.dim
        if len(args.ball) != dim + 1:
            raise InputError(f"--ball needs {dim} coordinates and a radius")
        ball = Ball.at(f.lattice, args.ball[:dim], args.ball[dim])
    # M is the fractional operator at alpha = 0, so both names share one code path
    if variant == "fractional" and args.alpha == 0.0:
        variant = "HL"
    mode = "containing" if variant == "local" else args.mode
    req = MaximalRequest(variant, args.alpha, b, ball, mode, args.radii)
    out = evaluate(f, req)
    write_grid(out, args.output, binary=args.binary)
    print(f"core {_core_bounds(out)} points={int(out.mask.sum())}")
    return EXIT_OK


def cmd_norm(args) -> int:
    f = read_grid(args.input)
    lat = f.lattice
    if args.kind == "lp":
        value = lp_norm(f, args.p)
    elif args.kind == "weak":
        value = weak_quasinorm(f, args.p)
    elif args.kind == "lipschitz":
        value = lipschitz_seminorm(f, args.beta).value
    else:
        family = BallFamily(lat, args.radii if args.radii is not None else dyadic_radii(lat))
        if args.kind == "morrey":
            value = morrey_norm(f, args.p, args.lam, family).value
        else:
            value = lip_beta_p_norm(f, args.beta, args.p, family).value
    print(f"{args.kind} {value:.17g}")
    return EXIT_OK


def _plan(args):
    config = _load(args)
    workers = _workers(args, config)
    jobs = runner.plan(config, _groups(args, config), args.seed)
    out = _out_dir(args, config)
    out.mkdir(parents=True, exist_ok=True)
    constants = runner.calibrate_groups([j.group for j in jobs], _calibration_path(args, config))
    store_file = runner.store_path(config)
    store = runner.load_store(store_file)
    return config, runner.attach(jobs, constants, store), workers, out, store_file, store


def _summarise(reports) -> list[str]:
    failed = []
    for r in reports:
        if not r.ok:
            failed.append(f"{r.group}/{r.suite}[{r.label}]")
    return failed


def cmd_verify(args) -> int:
    config, jobs, workers, out, store_file, store = _plan(args)
    results = runner.execute(jobs, workers)
    if args.freeze:
        store = runner.freeze(results, store)
        runner.save_store(store_file, store, config.regression)
        log.info("froze %d constants into %s", len(store), store_file)
    reports = [r for _, reps in results for r in reps]
    write_reports(reports, out, timings=args.timings)
    failed = _summarise(reports)
    print(f"{len(reports)} reports, {len(failed)} failing; results in {out}")
    for name in failed:
        print(f"FAIL {name}")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_refine(args) -> int:
    _, jobs, workers, out, _, _ = _plan(args)
    reports = runner.refine(jobs, workers)
    (out / "refine.csv").write_text(render_csv(reports, args.timings))
    (out / "refine.txt").write_text(render_records(reports, args.timings))
    failed = _summarise(reports)
    worst = max((r.value for r in reports), default=0.0)
    print(f"{len(reports)} constants, largest relative change {worst:.4g}, {len(failed)} above "
          f"{runner.REFINE_TOL:g}; results in {out}")
    for name in failed:
        print(f"FAIL {name}")
    return EXIT_FAIL if failed else EXIT_OK


COMMANDS = {"calibrate": cmd_calibrate, "op": cmd_op, "norm": cmd_norm, "verify": cmd_verify, "refine": cmd_refine}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"carnotmax: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RefusalError as exc:
        print(f"carnotmax: refused: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"carnotmax: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except runner.SuiteError as exc:
        print(f"carnotmax: suite failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ConvergenceError as exc:
        print(f"carnotmax: did not converge: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
