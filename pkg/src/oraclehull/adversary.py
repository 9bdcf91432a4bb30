"""Indistinguishable instance pairs that force estimator error.

Each construction builds two point sets that answer every query of a
given estimator identically, so the estimator returns the same hull for
both.  Half the volume between their hulls is then a lower bound on the
error it makes on one of them.

* ``nonadaptive_orth_adversary``: points on a hyperplane ``Σx = 1 + δ(i-1)``
  plus one extra point on the next hyperplane, hidden from the captured boxes.
* ``adaptive_orth_adversary_run``: a continuous hyperplane patch plus one
  point on a parallel hyperplane, found after watching a live run.
* ``nonadaptive_halfplane_adversary``: two axis points plus a point just
  above their midpoint, in a bucket no query line passes through.
* ``adaptive_halfplane_adversary_run``: points on the inscribed circle
  versus only those touched by the answered extreme halfplanes.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .algorithms import (EstimatorResult, adaptive_halfplane, adaptive_orthogonal,
                         non_adaptive_orthogonal)
from .errors import AdversaryFailed, BudgetTooSmall, ConstructionFailed
from .geometry import (AxisBox, ConvexPolygon, HullBody, convex_hull_2d, monte_carlo_symmdiff,
                       polygon_area, symmetric_difference_area)
from .oracle import (EXTREME, ORTH, OracleSession, PointSetBackend, SlabPatchBackend)

Estimator = Callable[[OracleSession], EstimatorResult]
MAX_CANDIDATES = 1 << 20
GAP_SLACK = 1e-9


@dataclass
class AdversaryReport:
    which: str
    q: int
    d: int
    delta: float
    gap: float
    forced_error: float
    error_first: float
    error_second: float
    verdict: bool
    transcript_diff: str = ""
    c: float = float("nan")
    index: str = ""
    first: str = ""
    second: str = ""
    notes: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def bound_holds(self) -> bool:
        return self.forced_error >= self.gap / 2 - GAP_SLACK

    def to_text(self) -> str:
        """``key=value`` lines with stable key names."""
        rec = asdict(self)
        rec.pop("extra")
        rec["bound_holds"] = self.bound_holds
        lines = []
        for k, v in rec.items():
            if isinstance(v, float):
                v = format(v, ".17g")
            lines.append(f"{k}={v}")
        for k, v in sorted(self.extra.items()):
            lines.append(f"{k}={v}")
        return "\n".join(lines) + "\n"


def _fmt_points(pts: np.ndarray) -> str:
    return ";".join(",".join(format(float(x), ".17g") for x in row) for row in np.atleast_2d(pts))


def _first_diff(a: bytes, b: bytes) -> str:
    if a == b:
        return ""
    la, lb = a.decode().splitlines(), b.decode().splitlines()
    for k, (x, y) in enumerate(zip(la, lb)):
        if x != y:
            return f"line {k}: {x!r} != {y!r}"
    return f"lengths {len(la)} != {len(lb)}"


def hull_volume(points: np.ndarray) -> float:
    """Exact volume of a point set's hull; zero when the hull is flat."""
    pts = np.asarray(points, dtype=float)
    if pts.shape[1] == 2:
        return polygon_area(convex_hull_2d(pts))
    try:
        return float(ConvexHull(pts).volume)
    except (QhullError, ValueError):
        return 0.0


def _error_against(result: EstimatorResult, points: np.ndarray, seed: int) -> float:
    d = points.shape[1]
    if d == 2:
        return symmetric_difference_area(result.hull.polygon, convex_hull_2d(points))
    if hull_volume(points) == 0.0:
        # a flat hull is a null set
        def member(x):
            return np.zeros(len(x), dtype=bool)
    else:
        member = HullBody(points).contains
    return monte_carlo_symmdiff(result.hull.contains, member, d, 10 ** 6, seed)[0]


def _run(estimator: Estimator, backend, mode: str = "adaptive", extreme_budget=None):
    session = OracleSession(backend, mode=mode, extreme_budget=extreme_budget)
    result = estimator(session)
    return result, session.transcript(), session


def _pair_errors(res: EstimatorResult, first: np.ndarray, second: np.ndarray, seed: int):
    e1 = _error_against(res, first, seed)
    e2 = _error_against(res, second, seed)
    return e1, e2


# -- free point search -----------------------------------------------------


def _clip_to_cube(lo: np.ndarray, hi: np.ndarray):
    clo, chi = np.maximum(lo, 0.0), np.minimum(hi, 1.0)
    return clo, chi, np.all(clo <= chi, axis=1)


def meets_level(lo: np.ndarray, hi: np.ndarray, level: float) -> np.ndarray:
    """Does each box (clipped to the cube) meet ``{Σx = level}``?"""
    clo, chi, inside = _clip_to_cube(lo, hi)
    return inside & (clo.sum(axis=1) <= level) & (level <= chi.sum(axis=1))


def free_point_on_level(level: float, d: int, forbid_lo: np.ndarray, forbid_hi: np.ndarray) -> np.ndarray:
    """A point of ``{Σx = level} ∩ [0,1]^d`` outside every forbidden closed box.

    Grids of cell midpoints over the first d-1 coordinates are refined
    until some candidate is uncovered; the candidate farthest (in L∞)
    from the forbidden boxes is returned.
    """
    m = 2
    while m ** (d - 1) <= MAX_CANDIDATES:
        axis = (np.arange(m) + 0.5) / m
        grids = np.meshgrid(*([axis] * (d - 1)), indexing="ij")
        free = np.column_stack([g.reshape(-1) for g in grids]) if d > 1 else np.empty((1, 0))
        last = level - free.sum(axis=1)
        ok = (last >= 0.0) & (last <= 1.0)
        cand = np.column_stack([free[ok], last[ok]])
        if len(cand):
            if len(forbid_lo) == 0:
                margin = np.full(len(cand), np.inf)
            else:
                margin = np.full(len(cand), np.inf)
                step = max(1, 2_000_000 // (len(forbid_lo) * d))
                for s in range(0, len(cand), step):
                    c = cand[s:s + step, None, :]
                    gap = np.maximum(forbid_lo[None] - c, c - forbid_hi[None]).max(axis=2)
                    margin[s:s + step] = gap.min(axis=1)
            best = int(np.argmax(margin))
            if margin[best] > 0:
                return cand[best]
        m *= 2
    raise ConstructionFailed(f"no free point on Σx = {level} after {MAX_CANDIDATES} candidates")


def _point_in_box_on_level(lo: np.ndarray, hi: np.ndarray, level: float) -> np.ndarray:
    """A point of each box (already clipped) on ``Σx = level``."""
    slo, shi = lo.sum(axis=1), hi.sum(axis=1)
    span = shi - slo
    t = np.where(span > 0, (level - slo) / np.where(span > 0, span, 1.0), 0.0)
    return lo + np.clip(t, 0.0, 1.0)[:, None] * (hi - lo)


def good_box_counts(lo: np.ndarray, hi: np.ndarray, levels: np.ndarray) -> np.ndarray:
    """For each i >= 1, the number of boxes meeting level i but not level i-1."""
    meets = np.stack([meets_level(lo, hi, float(L)) for L in levels], axis=1)
    good = meets[:, 1:] & ~meets[:, :-1]
    return good.sum(axis=0)


# -- the four constructions ------------------------------------------------


def nonadaptive_orth_adversary(boxes, q: int, d: int, c: float | None = None,
                               estimator: Estimator | None = None, seed: int = 0) -> AdversaryReport:
    """Hide a point from a fixed family of boxes.

    ``boxes`` is either a list of ``AxisBox`` or a ``(lo, hi)`` pair of
    arrays.  The hyperplanes are ``Σx = 1 + δi`` for ``i = 0..n`` with
    ``n = ceil(q^{1/d}) + 1`` and ``δ = q^{-1/d} / c``.
    """
    c = 4 * d if c is None else float(c)
    if c < 4 * d:
        raise ValueError(f"c must be at least 4d = {4 * d}")
    lo, hi = _box_arrays(boxes, d)
    n = math.ceil(q ** (1.0 / d) - 1e-12) + 1
    delta = q ** (-1.0 / d) / c
    levels = 1.0 + delta * np.arange(n + 1)
    counts = good_box_counts(lo, hi, levels)
    i = int(np.argmin(counts)) + 1
    base, top = float(levels[i - 1]), float(levels[i])

    clo, chi, _ = _clip_to_cube(lo, hi)
    touching = meets_level(lo, hi, base)
    z = np.vstack([SlabPatchBackend(np.ones(d), base)._patch_vertices(),
                   _point_in_box_on_level(clo[touching], chi[touching], base)])
    z = np.unique(z, axis=0)
    good = meets_level(lo, hi, top) & ~touching
    p = free_point_on_level(top, d, clo[good], chi[good])
    z2 = np.vstack([z, p])

    estimator = estimator or (lambda s: non_adaptive_orthogonal(s, q))
    res1, t1, _ = _run(estimator, PointSetBackend(z), mode="non-adaptive")
    res2, t2, _ = _run(estimator, PointSetBackend(z2), mode="non-adaptive")
    # the captured boxes themselves must also agree
    same_boxes = np.array_equal(PointSetBackend(z).boxes_empty(lo, hi),
                                PointSetBackend(z2).boxes_empty(lo, hi))
    gap = hull_volume(z2) - hull_volume(z)
    e1, e2 = _pair_errors(res1, z, z2, seed)
    return AdversaryReport(
        which="nao", q=q, d=d, c=c, delta=delta, gap=gap, forced_error=max(e1, e2),
        error_first=e1, error_second=e2, verdict=(t1 == t2) and same_boxes,
        transcript_diff=_first_diff(t1, t2) or ("" if same_boxes else "captured boxes disagree"),
        index=str(i), first=_fmt_points(z), second=_fmt_points(z2),
        extra={"good_boxes": int(counts[i - 1]), "n": n, "hidden_point": _fmt_points(p)})


def adaptive_orth_adversary_run(q: int, d: int = 2, c: float | None = None,
                                estimator: Estimator | None = None, seed: int = 0) -> AdversaryReport:
    """Watch a live run on a hyperplane patch, then hide a point from it.

    The first instance is the patch ``Σx = 1 + ε`` (ε = δ/100) inside the
    cube; the second adds one point on ``Σx = 1 + δ`` that avoids every
    queried box meeting that level but not ``Σx = 1``.  The run must then
    repeat exactly, or ``AdversaryFailed`` is raised.
    """
    if d < 2:
        raise ValueError("needs d >= 2")
    c = (8.0 if d == 2 else 4.0 * d) if c is None else float(c)
    delta = q ** (-1.0 / (d - 1)) / c
    eps = delta / 100
    estimator = estimator or (lambda s: adaptive_orthogonal(s, q))
    first = SlabPatchBackend(np.ones(d), 1.0 + eps)
    res1, t1, s1 = _run(estimator, first)
    segs = [s for s in s1.ledger.segments if s.kind == ORTH]
    if not segs:
        raise ValueError("estimator made no orthogonal queries")
    desc = np.vstack([s.desc for s in segs])
    lo, hi = desc[:, :d], desc[:, d:]
    clo, chi, _ = _clip_to_cube(lo, hi)
    good = meets_level(lo, hi, 1.0 + delta) & ~meets_level(lo, hi, 1.0)
    p = free_point_on_level(1.0 + delta, d, clo[good], chi[good])
    second = SlabPatchBackend(np.ones(d), 1.0 + eps, extra=p)
    res2, t2, _ = _run(estimator, second)
    if t1 != t2:
        raise AdversaryFailed(f"transcripts diverge: {_first_diff(t1, t2)}")
    z = first.points_for_support()
    z2 = second.points_for_support()
    gap = hull_volume(z2) - hull_volume(z)
    e1, e2 = _pair_errors(res1, z, z2, seed)
    return AdversaryReport(
        which="ao", q=q, d=d, c=c, delta=delta, gap=gap, forced_error=max(e1, e2),
        error_first=e1, error_second=e2, verdict=True, index="1",
        first=f"patch sum(x)={1.0 + eps!r}", second=f"patch + {_fmt_points(p)}",
        notes="delta = q^(-1/(d-1))/c",
        extra={"good_boxes": int(good.sum()), "queries": len(lo), "epsilon": eps})


def bucket_values(delta: float) -> np.ndarray:
    """Multiples of delta in [1/3, 2/3]."""
    lo = math.ceil((1.0 / 3.0) / delta - 1e-9)
    hi = math.floor((2.0 / 3.0) / delta + 1e-9)
    return delta * np.arange(lo, hi + 1)


def charged_buckets(normals: np.ndarray, offsets: np.ndarray, values: np.ndarray, delta: float) -> set:
    """Buckets ``[a, a+δ) x [b, b+δ)`` hit by some line's (x, y) intercepts."""
    charged = set()
    k = len(values)
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = offsets / normals[:, 0]
        yi = offsets / normals[:, 1]
    ia = np.floor((xi - values[0]) / delta + 1e-12)
    ib = np.floor((yi - values[0]) / delta + 1e-12)
    ok = np.isfinite(ia) & np.isfinite(ib) & (ia >= 0) & (ia < k) & (ib >= 0) & (ib < k)
    for a, b in zip(ia[ok].astype(int), ib[ok].astype(int)):
        charged.add((int(a), int(b)))
    return charged


def nonadaptive_halfplane_adversary(halfplanes, q: int | None = None,
                                    estimator: Estimator | None = None,
                                    seed: int = 0) -> AdversaryReport:
    """Pick an uncharged intercept bucket and hide ``p*`` above its segment.

    ``halfplanes`` is a list of ``Halfplane`` or a ``(normals, offsets)``
    pair.  ``q`` defaults to the number of halfplanes.  Without an
    estimator only the captured queries are compared and the forced error
    is NaN.
    """
    normals, offsets = _halfplane_arrays(halfplanes)
    q = len(offsets) if q is None else int(q)
    if q < 4:
        raise BudgetTooSmall("needs q >= 4")
    delta = 1.0 / (10.0 * math.sqrt(q))
    values = bucket_values(delta)
    charged = charged_buckets(normals, offsets, values, delta)
    free = [(i, j) for i in range(len(values)) for j in range(len(values)) if (i, j) not in charged]
    if not free:
        raise AssertionError("every bucket is charged")
    ia, ib = max(free, key=lambda ij: (ij[0] + ij[1], -ij[0]))
    a, b = float(values[ia]), float(values[ib])
    p_star = np.array([a / 2 + delta / 10, b / 2 + delta / 10])
    z = np.array([[a, 0.0], [0.0, b]])
    z2 = np.vstack([z, p_star])
    same = np.array_equal(PointSetBackend(z).halfspaces_empty(normals, offsets),
                          PointSetBackend(z2).halfspaces_empty(normals, offsets))
    diff = "" if same else "captured halfplanes disagree"
    gap = polygon_area(convex_hull_2d(z2))
    e1 = e2 = float("nan")
    verdict = same
    if estimator is not None:
        res1, t1, _ = _run(estimator, PointSetBackend(z), mode="non-adaptive")
        res2, t2, _ = _run(estimator, PointSetBackend(z2), mode="non-adaptive")
        verdict = verdict and t1 == t2
        diff = diff or _first_diff(t1, t2)
        e1, e2 = _pair_errors(res1, z, z2, seed)
    return AdversaryReport(
        which="nah", q=q, d=2, delta=delta, gap=gap, forced_error=max(e1, e2),
        error_first=e1, error_second=e2, verdict=verdict, transcript_diff=diff,
        index=f"{a!r},{b!r}", first=_fmt_points(z), second=_fmt_points(z2),
        extra={"buckets": len(values) ** 2, "charged": len(charged), "p_star": _fmt_points(p_star)})


def circle_points(k: int) -> np.ndarray:
    """k points evenly spaced on the inscribed circle, starting at angle 0."""
    ang = 2 * np.pi * np.arange(k) / k
    return np.column_stack([0.5 + 0.5 * np.cos(ang), 0.5 + 0.5 * np.sin(ang)])


def sliver_area(q: int, radius: float = 0.5) -> float:
    """Area cut off the 4q-gon by dropping one vertex."""
    t = math.pi / (2 * q)
    return math.sin(t) * (1 - math.cos(t)) * radius ** 2


def adaptive_halfplane_adversary_run(q: int, estimator: Estimator | None = None,
                                     seed: int = 0) -> AdversaryReport:
    """Keep only the circle points touched by the estimator's answers.

    The estimator gets an exact extreme oracle and at most q extreme
    queries; by default it is the adaptive halfplane estimator cut off
    at that budget.
    """
    if q < 2:
        raise BudgetTooSmall("needs q >= 2")
    z = circle_points(4 * q)
    estimator = estimator or (lambda s: adaptive_halfplane(s, q, oracle="exact", max_extreme=q))
    res1, t1, s1 = _run(estimator, PointSetBackend(z), extreme_budget=q)
    segs = [s for s in s1.ledger.segments if s.kind == EXTREME]
    normals = np.vstack([s.desc for s in segs])
    offsets = np.concatenate([s.answers for s in segs])
    touch = np.zeros(len(z), dtype=bool)
    for n, b in zip(normals, offsets):
        touch |= np.abs(z[:, 0] * n[0] + z[:, 1] * n[1] - b) <= 1e-12
    bad = z[touch]
    backend = PointSetBackend(bad)
    same_answers = all(backend.support(n) == b for n, b in zip(normals, offsets))
    res2, t2, _ = _run(estimator, backend, extreme_budget=q)
    gap = hull_volume(z) - (hull_volume(bad) if len(bad) >= 3 else 0.0)
    e1, e2 = _pair_errors(res1, z, bad, seed)
    verdict = same_answers and t1 == t2
    return AdversaryReport(
        which="ah", q=q, d=2, delta=0.0, gap=gap, forced_error=max(e1, e2),
        error_first=e1, error_second=e2, verdict=verdict,
        transcript_diff=_first_diff(t1, t2) or ("" if same_answers else "answers differ on B"),
        index=f"bad={int(touch.sum())}", first=f"circle:{4 * q}", second=_fmt_points(bad),
        extra={"extreme_queries": len(offsets), "sliver": sliver_area(q)})


def _box_arrays(boxes, d: int) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(boxes, tuple) and len(boxes) == 2 and not isinstance(boxes[0], AxisBox):
        lo, hi = boxes
        return np.asarray(lo, dtype=float).reshape(-1, d), np.asarray(hi, dtype=float).reshape(-1, d)
    boxes = list(boxes)
    if not boxes:
        return np.empty((0, d)), np.empty((0, d))
    return np.array([b.lo for b in boxes]), np.array([b.hi for b in boxes])


def _halfplane_arrays(halfplanes) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(halfplanes, tuple) and len(halfplanes) == 2 and isinstance(halfplanes[0], np.ndarray):
        n, o = halfplanes
        return np.asarray(n, dtype=float).reshape(-1, 2), np.asarray(o, dtype=float).reshape(-1)
    hs = list(halfplanes)
    return (np.array([h.normal for h in hs], dtype=float).reshape(-1, 2),
            np.array([h.offset for h in hs], dtype=float))


def captured_orth_boxes(session: OracleSession) -> tuple[np.ndarray, np.ndarray]:
    d = session.dim
    desc = [s.desc for s in session.ledger.segments if s.kind == ORTH]
    if not desc:
        return np.empty((0, d)), np.empty((0, d))
    allq = np.vstack(desc)
    return allq[:, :d], allq[:, d:]


def captured_halfplanes(session: OracleSession) -> tuple[np.ndarray, np.ndarray]:
    desc = [s.desc for s in session.ledger.segments if s.kind == "halfplane"]
    if not desc:
        return np.empty((0, 2)), np.empty(0)
    allq = np.vstack(desc)
    return allq[:, :2], allq[:, 2]

