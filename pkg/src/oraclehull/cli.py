"""Command line: ``oraclehull {run,sweep,adversary,fit,gen}``.

Exit codes: 0 success, 2 usage error, 3 a construction or adversary failed.
"""
from __future__ import annotations

import argparse
import sys

from . import harness
from .errors import (AdversaryFailed, BudgetTooSmall, ConstructionFailed, EmptyInputError,
                     InsufficientData, InvalidGeometryError, PointSetFormatError, UsageError)
from .oracle import save_points

USAGE_ERRORS = (UsageError, BudgetTooSmall, InsufficientData, InvalidGeometryError,
                PointSetFormatError, EmptyInputError, FileNotFoundError)


def _delta(text: str):
    if text == "auto":
        return "auto"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"delta must be 'auto' or a number, not {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError("delta must be non-negative")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oraclehull", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, alg=True, points=True):
        if alg:
            sp.add_argument("--alg", choices=harness.ALGORITHMS, required=True,
                            help="nao, ao, nah or ah")
        sp.add_argument("--dim", type=int, default=2)
        sp.add_argument("--seed", type=int, default=0)
        if points:
            sp.add_argument("--points", default="circle:512",
                            help="uniform:N | circle:N | clustered:N | file:PATH")
        sp.add_argument("--out")

    run = sub.add_parser("run", help="one estimator run, printed as a CSV row")
    common(run)
    run.add_argument("--q", type=int, required=True)
    run.add_argument("--delta", type=_delta, default="auto")
    run.add_argument("--oracle", choices=harness.ORACLES, default="simulated")

    sw = sub.add_parser("sweep", help="trials over a q ladder, written as CSV")
    common(sw)
    sw.add_argument("--q-ladder", required=True, help="lo:hi:factor")
    sw.add_argument("--trials", type=int, default=1)
    sw.add_argument("--delta", type=_delta, default="auto")
    sw.add_argument("--oracle", choices=harness.ORACLES, default="simulated")
    sw.add_argument("--jobs", type=int, default=1)

    adv = sub.add_parser("adversary", help="run a lower-bound construction")
    common(adv, points=False)
    adv.add_argument("--q", type=int, required=True)
    adv.add_argument("--c", type=float, default=None)
    adv.add_argument("--target", choices=harness.ALGORITHMS, default=None,
                     help="estimator to attack (defaults to the matching one)")

    fit = sub.add_parser("fit", help="log-log slope of per-x medians in a sweep CSV")
    fit.add_argument("csv")
    fit.add_argument("--x", default="q")
    fit.add_argument("--y", default="error")

    gen = sub.add_parser("gen", help="write a point-set file")
    common(gen, alg=False)
    return p


def _cmd_run(a) -> int:
    pts = harness.points_from_spec(a.points, a.dim, a.seed)
    rec = harness.run_trial(a.alg, a.dim, a.q, pts, a.delta, a.oracle, a.seed, a.points)
    text = harness.records_to_csv([rec])
    if a.out:
        harness.write_csv(a.out, [rec])
    sys.stdout.write(text)
    return 0


def _cmd_sweep(a) -> int:
    cfg = harness.SweepConfig(algorithm=a.alg, d=a.dim, qs=tuple(harness.q_ladder(a.q_ladder)),
                              trials=a.trials, points=a.points, seed=a.seed, delta=a.delta,
                              oracle=a.oracle, out=a.out, jobs=a.jobs)
    records = harness.sweep(cfg)
    if not a.out:
        sys.stdout.write(harness.records_to_csv(records))
    else:
        sys.stdout.write(harness.summary_table(records))
    return 0


def _cmd_adversary(a) -> int:
    report, _ = harness.adversary_drive(a.alg, a.q, a.dim, a.c, a.seed, a.target, a.out)
    sys.stdout.write(report.to_text())
    return 0 if report.verdict else 3


def _cmd_fit(a) -> int:
    f = harness.fit_slope(a.csv, a.x, a.y)
    sys.stdout.write(f"slope={f.slope:.6g}\nintercept={f.intercept:.6g}\nstderr={f.stderr:.6g}\n"
                     f"points={f.points}\nexcluded={f.excluded}\n")
    return 0


def _cmd_gen(a) -> int:
    pts = harness.points_from_spec(a.points, a.dim, a.seed)
    if a.out:
        save_points(a.out, pts)
    else:
        sys.stdout.write(f"{pts.shape[1]} {pts.shape[0]}\n")
        for row in pts:
            sys.stdout.write(" ".join(repr(float(x)) for x in row) + "\n")
    return 0


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "adversary": _cmd_adversary,
            "fit": _cmd_fit, "gen": _cmd_gen}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConstructionFailed, AdversaryFailed) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except USAGE_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
