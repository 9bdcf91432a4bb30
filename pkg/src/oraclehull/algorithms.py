"""Hull estimators driven by emptiness and extreme-halfplane queries.

* ``non_adaptive_orthogonal``: one batch of grid cells, hull of the
  nonempty cells' corners.
* ``adaptive_orthogonal``: per sign vector, a sandwich of dominance hulls
  refined over dyadic boxes; the answer is the intersection over all
  sign vectors.
* ``non_adaptive_halfplane``: extreme queries in evenly spaced directions,
  intersected.
* ``adaptive_halfplane``: start from the four axis directions and bisect
  angular gaps whose edge is long enough, until nothing qualifies.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetTooSmall, EmptyInputError, InvalidGeometryError
from .geometry import (EPS, AxisBox, ConvexPolygon, DominanceHull, HullBody, _monotone_chain,
                       clip_halfplane, convex_hull_2d, convex_intersect, cube_contains,
                       halfspace_intersection_2d, polygon_contains, sandwich_mask)
from .oracle import ExtremeOracleConfig, OracleSession, ledger_report

TWO_PI = 2.0 * math.pi
# working window for halfplane intersections before the final cube clip
WINDOW = AxisBox((-1.0, -1.0), (2.0, 2.0))
SIGMA_TOL = 1e-9
ANGLE_DUP_TOL = 1e-12


# -- hull representations --------------------------------------------------


class PolygonHull:
    """Explicit convex polygon inside the unit square."""

    def __init__(self, polygon: ConvexPolygon):
        self.dim = 2
        self.polygon = polygon

    def contains(self, points, tol: float = EPS) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return cube_contains(pts, 0.0) & polygon_contains(self.polygon, pts, tol)


class VertexHull:
    """Convex hull of a vertex set, any dimension."""

    def __init__(self, vertices):
        self.vertices = np.asarray(vertices, dtype=float)
        self.dim = self.vertices.shape[1]
        self._body = HullBody(self.vertices)
        self.polygon = convex_hull_2d(self.vertices) if self.dim == 2 else None

    def contains(self, points, tol: float = EPS) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        return cube_contains(pts, 0.0) & self._body.contains(pts, tol)


class OrthantHull:
    """Intersection of one dominance hull per sign vector, within the cube."""

    def __init__(self, hulls: dict[tuple[int, ...], DominanceHull]):
        self.hulls = hulls
        self.dim = len(next(iter(hulls)))
        self.polygon = None
        if self.dim == 2:
            poly = ConvexPolygon.from_box(AxisBox.unit(2))
            for h in hulls.values():
                poly = convex_intersect(poly, h.polygon())
            self.polygon = poly

    def corners(self) -> dict[tuple[int, ...], np.ndarray]:
        return {v: h.corners for v, h in self.hulls.items()}

    def contains(self, points, tol: float = EPS) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        ok = cube_contains(pts, 0.0)
        for h in self.hulls.values():
            ok &= h.contains(pts, tol)
        return ok


@dataclass
class EstimatorResult:
    hull: object
    queries_used: dict
    extreme_queries: int
    iterations: int
    wall_ms: float
    trace: dict = field(default_factory=dict)

    @property
    def emptiness_queries(self) -> int:
        return self.queries_used["orth"] + self.queries_used["halfplane"]


def _result(session: OracleSession, hull, iterations: int, t0: float, trace=None) -> EstimatorResult:
    rep = ledger_report(session.ledger)
    return EstimatorResult(hull=hull, queries_used=dict(rep.totals), extreme_queries=rep.extreme_calls,
                           iterations=iterations, wall_ms=(time.perf_counter() - t0) * 1e3,
                           trace=trace or {})


def integer_root(q: int, d: int) -> int:
    """Largest r with r**d <= q."""
    if q < 1 or d < 1:
        raise BudgetTooSmall("need q >= 1 and d >= 1")
    r = int(round(q ** (1.0 / d)))
    while r ** d > q:
        r -= 1
    while (r + 1) ** d <= q:
        r += 1
    return r


# -- non-adaptive orthogonal -----------------------------------------------


def grid_cells(r: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """The r^d closed cells of the regular grid, as lo/hi arrays."""
    edges = np.arange(r + 1) / r
    idx = np.array(list(itertools.product(range(r), repeat=d)), dtype=int).reshape(-1, d)
    return edges[idx], edges[idx + 1]


def non_adaptive_orthogonal(session: OracleSession, q: int) -> EstimatorResult:
    t0 = time.perf_counter()
    d = session.dim
    r = integer_root(q, d)
    lo, hi = grid_cells(r, d)
    with session.batch() as b:
        ticket = b.boxes(lo, hi)
    nonempty = ~ticket.value
    if not nonempty.any():
        raise EmptyInputError("every cell is empty")
    lo, hi = lo[nonempty], hi[nonempty]
    corners = np.concatenate([np.where(bits, hi, lo)
                              for bits in itertools.product((False, True), repeat=d)])
    corners = np.unique(corners, axis=0)
    hull = PolygonHull(convex_hull_2d(corners)) if d == 2 else VertexHull(corners)
    return _result(session, hull, 1, t0, {"r": r, "cells": int(nonempty.sum())})


# -- adaptive orthogonal ---------------------------------------------------


def orthant_iterations(q: int, d: int) -> int:
    """``ceil(log2(q) / (d - 1))``, robust to float noise at exact powers."""
    return max(1, math.ceil(math.log2(q) / (d - 1) - 1e-12))


def _subdivide(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = lo.shape[1]
    mid = (lo + hi) / 2
    bits = np.array(list(itertools.product((False, True), repeat=d)))
    clo = np.where(bits[None], mid[:, None], lo[:, None])
    chi = np.where(bits[None], hi[:, None], mid[:, None])
    return clo.reshape(-1, d), chi.reshape(-1, d)


def adaptive_orthogonal_orthant(session: OracleSession, q: int, v, trace: list | None = None
                                ) -> DominanceHull:
    """Refine the sandwich ``L ⊂ CH_v(P) ⊆ U`` and return the final ``U``.

    Each iteration queries every current box in one batch, rebuilds U from
    the v-corners and L from the (-v)-corners of the nonempty boxes, keeps
    the boxes that meet ``U \\ L`` and splits them into 2^d children.
    """
    d = session.dim
    if d < 2 or q < 2:
        raise BudgetTooSmall("adaptive orthogonal search needs d >= 2 and q >= 2")
    v = np.asarray(v, dtype=float)
    t = orthant_iterations(q, d)
    lo, hi = np.zeros((1, d)), np.ones((1, d))
    upper = None
    for it in range(1, t + 1):
        empty = session.orth_batch(lo, hi)
        ne = ~empty
        if not ne.any():
            raise EmptyInputError("no nonempty box; the point set is empty")
        u_corners = np.where(v > 0, hi[ne], lo[ne])
        l_corners = np.where(v > 0, lo[ne], hi[ne])
        upper = DominanceHull(u_corners, v)
        lower = DominanceHull(l_corners, v)
        if trace is not None:
            trace.append({"iteration": it, "boxes": len(lo), "nonempty": int(ne.sum()),
                          "u_corners": u_corners, "l_corners": l_corners})
        if it == t:
            break
        keep = sandwich_mask(lo, hi, upper, lower)
        lo, hi = _subdivide(lo[keep], hi[keep])
    return upper


def adaptive_orthogonal(session: OracleSession, q: int) -> EstimatorResult:
    t0 = time.perf_counter()
    d = session.dim
    hulls = {}
    traces = {}
    for v in itertools.product((-1, 1), repeat=d):
        tr: list = []
        hulls[v] = adaptive_orthogonal_orthant(session, q, v, tr)
        traces[v] = tr
    t = orthant_iterations(q, d)
    return _result(session, OrthantHull(hulls), t, t0, {"orthants": traces})


# -- halfplane estimators --------------------------------------------------


def direction(theta: float) -> tuple[float, float]:
    """Unit vector for angle theta, as ``(sin θ, cos θ)``."""
    return (math.sin(theta), math.cos(theta))


def _extreme_config(oracle: str, delta: float, adaptive: bool) -> ExtremeOracleConfig:
    if oracle == "exact":
        return ExtremeOracleConfig("exact", 0.0)
    if oracle == "worst-shift":
        return ExtremeOracleConfig("worst-case-shift", delta)
    if oracle == "simulated":
        return ExtremeOracleConfig("simulated-adaptive" if adaptive else "simulated-nonadaptive", delta)
    raise ValueError(f"unknown oracle kind {oracle!r}")


def non_adaptive_halfplane(session: OracleSession, q: int, delta="auto",
                           oracle: str = "simulated") -> EstimatorResult:
    """Intersect extreme halfplanes in the q directions ``2πi/q``, i = 1..q.

    All extreme queries, and under simulation all their emptiness queries,
    go out in one batch.
    """
    t0 = time.perf_counter()
    if session.dim != 2:
        raise InvalidGeometryError("halfplane estimators are planar")
    if q < 3:
        raise BudgetTooSmall("need at least 3 directions")
    delta = 1.0 / q if delta == "auto" else float(delta)
    config = _extreme_config(oracle, delta, adaptive=False)
    with session.batch() as b:
        tickets = [b.extreme(direction(TWO_PI * i / q), config) for i in range(1, q + 1)]
    answers = [t.value for t in tickets]
    # (∩ H) ∩ [-1,2]^2 ∩ [0,1]^2 is just (∩ H) ∩ [0,1]^2
    poly = halfspace_intersection_2d(answers, AxisBox.unit(2))
    return _result(session, PolygonHull(poly), 1, t0, {"delta": delta, "halfplanes": answers})


def _sigma_length(verts: np.ndarray, normal, offset: float) -> float:
    """Length of the polygon's edge lying on the line ``<x, n> = offset`` (0 if none)."""
    if len(verts) < 2:
        return 0.0
    s = verts[:, 0] * normal[0] + verts[:, 1] * normal[1] - offset
    on = verts[np.abs(s) <= SIGMA_TOL]
    if len(on) < 2:
        return 0.0
    along = on[:, 0] * -normal[1] + on[:, 1] * normal[0]
    return float(along.max() - along.min())


def adaptive_halfplane(session: OracleSession, q: int, delta="auto", oracle: str = "simulated",
                       max_extreme: int | None = None) -> EstimatorResult:
    """Bisect angular gaps where ``ang(v_{i-1}, v_i) * |σ_i| > 1/q^2``.

    ``σ_i`` is the edge of the current intersection lying on the boundary
    of ``H_{v_i}``.  With ``max_extreme`` set, refinement stops once that
    many extreme queries have been made (bisectors are added in clockwise
    order until the cap).
    """
    t0 = time.perf_counter()
    if session.dim != 2:
        raise InvalidGeometryError("halfplane estimators are planar")
    if q < 1:
        raise BudgetTooSmall("q must be positive")
    delta = 1.0 / q ** 4 if delta == "auto" else float(delta)
    config = _extreme_config(oracle, delta, adaptive=True)
    threshold = 1.0 / q ** 2
    if max_extreme is not None and max_extreme < 1:
        raise BudgetTooSmall("the extreme-query cap must be positive")

    thetas = [0.0, math.pi / 2, math.pi, 1.5 * math.pi]
    truncated = max_extreme is not None and max_extreme < 4
    if truncated:
        thetas = thetas[:max_extreme]
    planes = {th: session.extreme(direction(th), config) for th in thetas}
    verts = np.asarray(ConvexPolygon.from_box(WINDOW).vertices)
    for th in thetas:
        verts = clip_halfplane(verts, planes[th].normal, planes[th].offset)
    verts = _monotone_chain(verts) if len(verts) else verts

    used = len(thetas)
    iterations = 0
    while not truncated:
        iterations += 1
        thetas.sort()
        new = []
        for i, th in enumerate(thetas):
            prev = thetas[i - 1]
            gap = (th - prev) % TWO_PI
            h = planes[th]
            if gap * _sigma_length(verts, h.normal, h.offset) > threshold:
                mid = (prev + gap / 2) % TWO_PI
                if min(abs(mid - t) for t in thetas) > ANGLE_DUP_TOL:
                    new.append(mid)
        if max_extreme is not None and used + len(new) > max_extreme:
            new = new[: max_extreme - used]
            truncated = True
        if not new:
            break
        for th in new:
            h = session.extreme(direction(th), config)
            planes[th] = h
            thetas.append(th)
            if len(verts):
                verts = clip_halfplane(verts, h.normal, h.offset)
        used += len(new)
        verts = _monotone_chain(verts) if len(verts) else verts
        if truncated:
            break

    thetas.sort()
    gaps = np.diff(np.array(thetas + [thetas[0] + TWO_PI]))
    min_gap = float(gaps.min())
    if not truncated and (oracle == "exact" or delta <= 1.0 / q ** 4) and min_gap < 1.0 / (12 * q * q):
        raise AssertionError(f"angular gap {min_gap} below 1/(12 q^2)")
    poly = ConvexPolygon(verts)
    if len(poly):
        poly = convex_intersect(poly, ConvexPolygon.from_box(AxisBox.unit(2)))
    trace = {"delta": delta, "directions": len(thetas), "min_gap": min_gap,
             "truncated": truncated, "thetas": list(thetas)}
    return _result(session, PolygonHull(poly), iterations, t0, trace)


def extreme_budget_for(q_emptiness: int) -> int:
    """Largest q' with ``q' * (ceil(log2(√2 q'^4)) + 1) <= q``; the inner
    factor bounds the emptiness cost of one adaptively simulated extreme
    query at accuracy ``1/q'^4``."""
    best = 0
    k = 1
    while k * (math.ceil(math.log2(math.sqrt(2) * k ** 4)) + 1) <= q_emptiness:
        best = k
        k += 1
    return best
