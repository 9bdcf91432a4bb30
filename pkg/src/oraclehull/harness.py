"""Trials, sweeps, slope fits and adversary drivers.

Algorithm ids: ``nao`` non-adaptive orthogonal, ``ao`` adaptive
orthogonal, ``nah`` non-adaptive halfplane, ``ah`` adaptive halfplane.

For the halfplane estimators under a simulated extreme oracle, the budget
``q`` counts emptiness queries and is converted to a direction count:
``nah`` uses ``floor(sqrt(q))`` directions at accuracy ``1/floor(sqrt(q))``;
``ah`` uses the largest ``q'`` whose worst-case emptiness cost
``q' * (ceil(log2(√2 q'^4)) + 1)`` fits in ``q``.  With an exact or
shifted oracle, ``q`` is passed through unchanged.
"""
from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np
from scipy.stats import linregress

from . import algorithms as alg
from .adversary import (AdversaryReport, adaptive_halfplane_adversary_run,
                        adaptive_orth_adversary_run, captured_halfplanes, captured_orth_boxes,
                        nonadaptive_halfplane_adversary, nonadaptive_orth_adversary)
from .errors import BudgetTooSmall, InsufficientData, InvalidGeometryError, UsageError
from .geometry import HullBody, convex_hull_2d, monte_carlo_symmdiff, symmetric_difference_area
from .oracle import OracleSession, PointSetBackend, load_points

ALGORITHMS = ("nao", "ao", "nah", "ah")
NON_ADAPTIVE = {"nao", "nah"}
HALFPLANE_ALGS = {"nah", "ah"}
ORACLES = ("exact", "simulated", "worst-shift")
MC_SAMPLES = 10 ** 6
CSV_HEADER = ("algorithm,d,q,queries_used,extreme_queries,error,error_std,"
              "iterations,seed,pointset,wall_ms")


# -- point sets ------------------------------------------------------------


def generate_points(kind: str, n: int = 0, d: int = 2, seed: int = 0, path=None) -> np.ndarray:
    """Deterministic point sets in the unit cube.

    ``circle`` puts n points at ``(0.5 + 0.5 cos a, 0.5 + 0.5 sin a)`` for
    ``a = 2πk/n``; ``clustered`` draws Gaussian blobs around a few random
    centres, clipped to the cube.
    """
    if kind == "file":
        if path is None:
            raise UsageError("file point sets need a path")
        pts = load_points(path)
        if pts.shape[1] != d:
            raise UsageError(f"file has dimension {pts.shape[1]}, expected {d}")
        return pts
    if n < 1:
        raise UsageError("n must be positive")
    if kind == "circle":
        if d != 2:
            raise InvalidGeometryError("circle point sets are planar")
        a = 2 * np.pi * np.arange(n) / n
        return np.column_stack([0.5 + 0.5 * np.cos(a), 0.5 + 0.5 * np.sin(a)])
    rng = np.random.default_rng(seed)
    if kind == "uniform":
        return rng.random((n, d))
    if kind == "clustered":
        k = max(1, n // 64)
        centres = 0.2 + 0.6 * rng.random((k, d))
        which = rng.integers(0, k, size=n)
        return np.clip(centres[which] + 0.05 * rng.standard_normal((n, d)), 0.0, 1.0)
    raise UsageError(f"unknown point-set kind {kind!r}")


def parse_points_spec(spec: str) -> tuple[str, int, str | None]:
    """``uniform:N``, ``circle:N``, ``clustered:N`` or ``file:PATH``."""
    kind, _, arg = spec.partition(":")
    if kind == "file":
        if not arg:
            raise UsageError("file: needs a path")
        return kind, 0, arg
    if kind not in ("uniform", "circle", "clustered"):
        raise UsageError(f"unknown point-set kind {kind!r}")
    try:
        n = int(arg)
    except ValueError:
        raise UsageError(f"bad point count in {spec!r}") from None
    return kind, n, None


def points_from_spec(spec: str, d: int, seed: int) -> np.ndarray:
    kind, n, path = parse_points_spec(spec)
    return generate_points(kind, n, d, seed, path)


# -- single trials ---------------------------------------------------------


@dataclass(frozen=True)
class TrialRecord:
    algorithm: str
    d: int
    q: int
    queries_used: int
    extreme_queries: int
    error: float
    error_std: float
    iterations: int
    seed: int
    pointset: str
    wall_ms: float

    def csv_row(self) -> str:
        return ",".join(_fmt(x) for x in astuple(self))


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _parse_delta(delta):
    if delta in (None, "auto"):
        return "auto"
    return float(delta)


def make_estimator(algorithm: str, q: int, d: int, delta="auto", oracle: str = "simulated"):
    """The estimator for a budget, as a callable on a session."""
    if algorithm not in ALGORITHMS:
        raise UsageError(f"unknown algorithm {algorithm!r}")
    if oracle not in ORACLES:
        raise UsageError(f"unknown oracle {oracle!r}")
    if algorithm in HALFPLANE_ALGS and d != 2:
        raise UsageError("halfplane estimators need d = 2")
    delta = _parse_delta(delta)
    if algorithm == "nao":
        return lambda s: alg.non_adaptive_orthogonal(s, q)
    if algorithm == "ao":
        return lambda s: alg.adaptive_orthogonal(s, q)
    if algorithm == "nah":
        k = math.isqrt(q) if oracle == "simulated" else q
        dl = (1.0 / k if k else 0.0) if delta == "auto" and oracle == "simulated" else delta
        return lambda s: alg.non_adaptive_halfplane(s, k, delta=dl, oracle=oracle)
    k = alg.extreme_budget_for(q) if oracle == "simulated" else q
    if k < 1:
        raise BudgetTooSmall(f"budget {q} is too small for one simulated extreme query")
    return lambda s: alg.adaptive_halfplane(s, k, delta=delta, oracle=oracle)


def measure_error(hull, points: np.ndarray, seed: int) -> tuple[float, float]:
    """Exact area in 2D, Monte Carlo volume above."""
    d = points.shape[1]
    if d == 2:
        return symmetric_difference_area(hull.polygon, convex_hull_2d(points)), 0.0
    body = HullBody(points)
    if body.volume == 0.0:
        # a flat hull is a null set
        def member(x):
            return np.zeros(len(x), dtype=bool)
    else:
        member = body.contains
    return monte_carlo_symmdiff(hull.contains, member, d, MC_SAMPLES, seed)


def run_trial(algorithm: str, d: int, q: int, points, delta="auto", oracle: str = "simulated",
              seed: int = 0, pointset: str = "") -> TrialRecord:
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != d:
        raise UsageError(f"points must be an (n, {d}) array")
    estimator = make_estimator(algorithm, q, d, delta, oracle)
    mode = "non-adaptive" if algorithm in NON_ADAPTIVE else "adaptive"
    session = OracleSession(PointSetBackend(points), mode=mode)
    result = estimator(session)
    error, std = measure_error(result.hull, points, seed)
    return TrialRecord(algorithm=algorithm, d=d, q=q, queries_used=session.ledger.total,
                       extreme_queries=result.extreme_queries, error=float(max(error, 0.0)),
                       error_std=float(std), iterations=result.iterations, seed=int(seed),
                       pointset=pointset, wall_ms=float(result.wall_ms))


# -- sweeps ----------------------------------------------------------------


def q_ladder(spec: str) -> list[int]:
    """``lo:hi:factor`` -> geometric ladder lo, lo*f, ... <= hi."""
    try:
        lo, hi, factor = (int(x) for x in spec.split(":"))
    except ValueError:
        raise UsageError(f"bad ladder {spec!r}; expected lo:hi:factor") from None
    if lo < 1 or hi < lo or factor < 2:
        raise UsageError(f"bad ladder {spec!r}")
    out = [lo]
    while out[-1] * factor <= hi:
        out.append(out[-1] * factor)
    return out


def trial_seed(seed: int, q: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, q, trial]).generate_state(1)[0])


@dataclass(frozen=True)
class SweepConfig:
    algorithm: str
    d: int
    qs: tuple[int, ...]
    trials: int = 1
    points: str = "circle:512"
    seed: int = 0
    delta: object = "auto"
    oracle: str = "simulated"
    out: str | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise UsageError("trials must be at least 1")
        if any(b <= a for a, b in zip(self.qs, self.qs[1:])) or not self.qs:
            raise UsageError("q list must be nonempty and strictly increasing")


def _sweep_task(args) -> TrialRecord:
    cfg, q, trial = args
    seed = trial_seed(cfg.seed, q, trial)
    pts = points_from_spec(cfg.points, cfg.d, seed)
    return run_trial(cfg.algorithm, cfg.d, q, pts, cfg.delta, cfg.oracle, seed, cfg.points)


def sweep(config: SweepConfig) -> list[TrialRecord]:
    """Run every (q, trial) and, if ``config.out`` is set, write the CSV atomically."""
    tasks = [(config, q, t) for q in config.qs for t in range(config.trials)]
    if config.jobs > 1:
        with ProcessPoolExecutor(config.jobs) as pool:
            records = list(pool.map(_sweep_task, tasks))
    else:
        records = [_sweep_task(t) for t in tasks]
    if config.out:
        write_csv(config.out, records)
    return records


def records_to_csv(records) -> str:
    return CSV_HEADER + "\n" + "".join(r.csv_row() + "\n" for r in records)


def write_csv(path, records) -> None:
    _atomic_write(Path(path), records_to_csv(records))


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- slope fits ------------------------------------------------------------


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    points: int
    excluded: int


def fit_slope(csv_path, x: str = "q", y: str = "error") -> SlopeFit:
    """OLS of log2(median y) on log2 x, one point per distinct x.

    Rows with ``y <= 0`` are dropped and counted in ``excluded``.
    """
    with open(csv_path, newline="") as f:
        rows = list(csv.DictReader(f))
    return fit_rows([(float(r[x]), float(r[y])) for r in rows])


def fit_rows(pairs) -> SlopeFit:
    groups: dict[float, list[float]] = {}
    excluded = 0
    for xv, yv in pairs:
        if yv <= 0 or xv <= 0:
            excluded += 1
            continue
        groups.setdefault(xv, []).append(yv)
    if len(groups) < 3:
        raise InsufficientData(f"need at least 3 distinct x values, have {len(groups)}")
    xs = np.array(sorted(groups))
    ys = np.array([np.median(groups[k]) for k in xs])
    fit = linregress(np.log2(xs), np.log2(ys))
    return SlopeFit(float(fit.slope), float(fit.intercept), float(fit.stderr), len(xs), excluded)


# -- adversaries -----------------------------------------------------------


ADVERSARY_HEADER = "which,q,d,gap,forced_error,verdict"


def adversary_drive(which: str, q: int, d: int = 2, c: float | None = None, seed: int = 0,
                    target: str | None = None, out=None) -> tuple[AdversaryReport, str]:
    """Run one construction against the estimator it is built for.

    ``target`` names the estimator to attack; it must use the same query
    model as the construction.  Non-adaptive targets are captured with a
    dry run first.  With ``out`` set the CSV row is appended there.
    """
    if which not in ALGORITHMS:
        raise UsageError(f"unknown adversary {which!r}")
    target = target or which
    if target not in ALGORITHMS:
        raise UsageError(f"unknown estimator {target!r}")
    if (which in NON_ADAPTIVE) != (target in NON_ADAPTIVE) or \
            (which in HALFPLANE_ALGS) != (target in HALFPLANE_ALGS):
        raise UsageError(f"adversary {which} does not match the query model of {target}")
    if which in HALFPLANE_ALGS and d != 2:
        raise UsageError("halfplane adversaries need d = 2")
    if which == "nao":
        est = make_estimator("nao", q, d)
        dry = OracleSession(PointSetBackend(np.full((1, d), 0.5)), mode="non-adaptive")
        est(dry)
        report = nonadaptive_orth_adversary(captured_orth_boxes(dry), q, d, c, estimator=est, seed=seed)
    elif which == "ao":
        report = adaptive_orth_adversary_run(q, d, c, seed=seed)
    elif which == "nah":
        est = make_estimator("nah", q, 2)
        dry = OracleSession(PointSetBackend(np.full((1, 2), 0.5)), mode="non-adaptive")
        est(dry)
        report = nonadaptive_halfplane_adversary(captured_halfplanes(dry), estimator=est, seed=seed)
        # the construction is sized by the number of captured halfplanes
        report.extra["budget"] = q
    else:
        report = adaptive_halfplane_adversary_run(q, seed=seed)
    row = ",".join([which, str(q), str(d), _fmt(report.gap), _fmt(report.forced_error),
                    str(report.verdict).lower()])
    if out is not None:
        path = Path(out)
        new = not path.exists() or path.stat().st_size == 0
        with open(path, "a", newline="\n") as f:
            if new:
                f.write(ADVERSARY_HEADER + "\n")
            f.write(row + "\n")
    return report, row


def summary_table(records) -> str:
    """Median error and queries per q, as aligned text."""
    buf = io.StringIO()
    by_q: dict[int, list[TrialRecord]] = {}
    for r in records:
        by_q.setdefault(r.q, []).append(r)
    buf.write(f"{'q':>8} {'queries':>10} {'median_error':>14}\n")
    for q in sorted(by_q):
        rs = by_q[q]
        buf.write(f"{q:>8} {int(np.median([r.queries_used for r in rs])):>10} "
                  f"{np.median([r.error for r in rs]):>14.6g}\n")
    return buf.getvalue()


TRIAL_FIELDS = tuple(f.name for f in fields(TrialRecord))
