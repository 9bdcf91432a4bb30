"""Convex geometry for the estimators and for error measurement.

Polygons in the plane are handled exactly (up to float rounding): clipping,
intersection, hulls and areas.  In higher dimension bodies are only
membership-testable, and volumes come from Monte Carlo sampling.

All ranges are closed.  ``EPS`` is the default predicate tolerance.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from .errors import EmptyInputError, InvalidGeometryError

EPS = 1e-9
INTERIOR_EPS = 1e-12
# inside test used while clipping; coordinates are O(1)
CLIP_EPS = 1e-12
# cross products at or below this are treated as collinear
HULL_TOL = 1e-14

MembershipFn = Callable[[np.ndarray], np.ndarray]


def _as_points(points, d: int | None = None) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if d is None else arr.reshape(-1, d)
    if d is not None and arr.size and arr.shape[1] != d:
        raise InvalidGeometryError(f"expected {d}-dimensional points, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidGeometryError("non-finite coordinates")
    return arr


def dot_rows(points: np.ndarray, v) -> np.ndarray:
    """Row-wise inner products, accumulated column by column.

    Each row's value depends only on that row, never on how many rows are
    in the array, which keeps oracle answers bit-stable across point sets.
    """
    acc = points[:, 0] * v[0]
    for j in range(1, points.shape[1]):
        acc = acc + points[:, j] * v[j]
    return acc


@dataclass(frozen=True)
class AxisBox:
    """Closed axis-parallel box ``prod [lo_j, hi_j]``."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(x) for x in self.lo)
        hi = tuple(float(x) for x in self.hi)
        if len(lo) != len(hi) or not lo:
            raise InvalidGeometryError("box corners must have the same positive length")
        if not all(math.isfinite(x) for x in lo + hi):
            raise InvalidGeometryError("non-finite box coordinate")
        if any(a > b for a, b in zip(lo, hi)):
            raise InvalidGeometryError(f"box has lo > hi: {lo} {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def unit(cls, d: int) -> "AxisBox":
        return cls((0.0,) * d, (1.0,) * d)

    @property
    def dim(self) -> int:
        return len(self.lo)

    def corner(self, v) -> tuple[float, ...]:
        """``argmax_{p in box} <p, v>`` for a sign vector ``v``."""
        return tuple(h if s > 0 else l for l, h, s in zip(self.lo, self.hi, v))

    def contains(self, points) -> np.ndarray:
        pts = _as_points(points, self.dim)
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)

    def subdivide(self) -> list["AxisBox"]:
        mid = [(a + b) / 2 for a, b in zip(self.lo, self.hi)]
        out = []
        for bits in itertools.product((0, 1), repeat=self.dim):
            lo = tuple(m if b else a for a, m, b in zip(self.lo, mid, bits))
            hi = tuple(c if b else m for c, m, b in zip(self.hi, mid, bits))
            out.append(AxisBox(lo, hi))
        return out


@dataclass(frozen=True)
class Halfplane:
    """Closed halfspace ``{p : <p, normal> <= offset}`` with a unit normal.

    Called a halfplane because the interesting case is d = 2, but nothing
    here depends on the dimension.
    """

    normal: tuple[float, ...]
    offset: float

    def __post_init__(self):
        n = tuple(float(x) for x in self.normal)
        if not all(math.isfinite(x) for x in n) or not math.isfinite(self.offset):
            raise InvalidGeometryError("non-finite halfplane")
        if abs(math.hypot(*n) - 1.0) > 1e-12:
            raise InvalidGeometryError(f"normal {n} is not a unit vector")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def from_normal(cls, normal, offset: float) -> "Halfplane":
        """Build from a non-unit normal; the set is unchanged."""
        n = np.asarray(normal, dtype=float)
        norm = float(np.hypot.reduce(n))
        if norm == 0.0:
            raise InvalidGeometryError("zero normal")
        return cls(tuple(n / norm), offset / norm)

    @property
    def dim(self) -> int:
        return len(self.normal)

    def slack(self, points) -> np.ndarray:
        pts = _as_points(points, self.dim)
        return dot_rows(pts, self.normal) - self.offset

    def contains(self, points, tol: float = 0.0) -> np.ndarray:
        return self.slack(points) <= tol


class ConvexPolygon:
    """Counter-clockwise convex polygon; fewer than 3 vertices is degenerate."""

    __slots__ = ("_v",)

    def __init__(self, vertices):
        v = np.array(vertices, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(v)):
            raise InvalidGeometryError("non-finite polygon vertex")
        if len(v) >= 3:
            if _signed_area(v) < 0:
                v = v[::-1].copy()
            e = np.roll(v, -1, axis=0) - v
            turns = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
            if np.any(turns < -1e-12):
                raise InvalidGeometryError("polygon is not convex")
        v.flags.writeable = False
        self._v = v

    @classmethod
    def from_box(cls, box: AxisBox) -> "ConvexPolygon":
        if box.dim != 2:
            raise InvalidGeometryError("only 2D boxes are polygons")
        (x0, y0), (x1, y1) = box.lo, box.hi
        return convex_hull_2d([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])

    @property
    def vertices(self) -> np.ndarray:
        return self._v

    def __len__(self) -> int:
        return len(self._v)

    @property
    def is_degenerate(self) -> bool:
        return len(self._v) < 3

    @property
    def area(self) -> float:
        return polygon_area(self)

    def contains(self, points, tol: float = EPS) -> np.ndarray:
        return polygon_contains(self, points, tol)

    def __repr__(self) -> str:
        return f"ConvexPolygon({self._v.tolist()!r})"


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_area(poly: ConvexPolygon) -> float:
    v = poly.vertices
    if len(v) < 3:
        return 0.0
    return abs(_signed_area(v))


def _monotone_chain(pts: np.ndarray) -> np.ndarray:
    pts = np.unique(pts, axis=0)
    if len(pts) <= 2:
        if len(pts) == 2 and np.hypot(*(pts[1] - pts[0])) <= 1e-14:
            return pts[:1]
        return pts
    pl = pts.tolist()

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pl:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= HULL_TOL:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pl):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= HULL_TOL:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) == 2 and math.dist(hull[0], hull[1]) <= 1e-14:
        hull = hull[:1]
    return np.array(hull, dtype=float).reshape(-1, 2)


def convex_hull_2d(points) -> ConvexPolygon:
    """CCW hull with collinear and duplicate points removed."""
    pts = _as_points(points, 2)
    if len(pts) == 0:
        raise EmptyInputError("convex hull of an empty point set")
    return ConvexPolygon(_monotone_chain(pts))


def polygon_halfplanes(poly: ConvexPolygon) -> tuple[np.ndarray, np.ndarray] | None:
    """Unit normals and offsets whose intersection is exactly ``poly``.

    Degenerate polygons get a closed description too: a segment becomes a
    zero-width strip capped at both ends, a point becomes four axis
    constraints.  Returns None for the empty polygon.
    """
    v = poly.vertices
    if len(v) == 0:
        return None
    if len(v) == 1:
        x, y = v[0]
        normals = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        return normals, np.array([x, -x, y, -y])
    if len(v) == 2:
        a, b = v
        u = (b - a) / np.hypot(*(b - a))
        w = np.array([-u[1], u[0]])
        normals = np.array([w, -w, u, -u])
        return normals, np.array([w @ a, -(w @ a), u @ b, -(u @ a)])
    e = np.roll(v, -1, axis=0) - v
    lengths = np.hypot(e[:, 0], e[:, 1])
    normals = np.column_stack([e[:, 1], -e[:, 0]]) / lengths[:, None]
    return normals, np.einsum("ij,ij->i", normals, v)


def polygon_contains(poly: ConvexPolygon, points, tol: float = EPS) -> np.ndarray:
    pts = _as_points(points, 2)
    hp = polygon_halfplanes(poly)
    if hp is None:
        return np.zeros(len(pts), dtype=bool)
    normals, offsets = hp
    return np.all(pts @ normals.T - offsets <= tol, axis=1)


def clip_halfplane(verts: np.ndarray, normal, offset: float, eps: float = CLIP_EPS) -> np.ndarray:
    """One Sutherland-Hodgman step: keep the part of ``verts`` with ``<x,n> <= offset``.

    Works on raw vertex arrays (any orientation, possibly degenerate) and
    does not re-normalise; call ``convex_hull_2d`` on the result for a
    clean polygon.
    """
    if len(verts) == 0:
        return verts
    s = verts[:, 0] * normal[0] + verts[:, 1] * normal[1] - offset
    inside = s <= eps
    if inside.all():
        return verts
    if not inside.any():
        return verts[:0]
    nxt = np.roll(verts, -1, axis=0)
    s_next = np.roll(s, -1)
    crossing = inside != np.roll(inside, -1)
    denom = np.where(crossing, s - s_next, 1.0)
    t = np.clip(np.where(crossing, s / denom, 0.0), 0.0, 1.0)
    x = verts + t[:, None] * (nxt - verts)
    stacked = np.stack([verts, x], axis=1).reshape(-1, 2)
    mask = np.stack([inside, crossing], axis=1).reshape(-1)
    out = stacked[mask]
    if len(out) > 1:
        step = np.hypot(*(out - np.roll(out, 1, axis=0)).T)
        keep = step > 1e-15
        out = out[keep] if keep.any() else out[:1]
    return out


def convex_intersect(a: ConvexPolygon, b: ConvexPolygon) -> ConvexPolygon:
    """``a ∩ b``; an empty intersection comes back as a 0-vertex polygon."""
    hp = polygon_halfplanes(b)
    if hp is None or len(a) == 0:
        return ConvexPolygon(np.empty((0, 2)))
    verts = np.asarray(a.vertices)
    for n, off in zip(*hp):
        verts = clip_halfplane(verts, n, off)
        if len(verts) == 0:
            return ConvexPolygon(np.empty((0, 2)))
    return ConvexPolygon(_monotone_chain(verts))


def symmetric_difference_area(a: ConvexPolygon, b: ConvexPolygon) -> float:
    inter = polygon_area(convex_intersect(a, b))
    return max(0.0, polygon_area(a) + polygon_area(b) - 2.0 * inter)


def halfspace_intersection_2d(halfplanes: Iterable[Halfplane], clip: AxisBox) -> ConvexPolygon:
    """``(∩ H) ∩ clip`` as a polygon, degenerate when the set is thin or empty."""
    verts = np.asarray(ConvexPolygon.from_box(clip).vertices)
    for h in halfplanes:
        verts = clip_halfplane(verts, h.normal, h.offset)
        if len(verts) == 0:
            return ConvexPolygon(np.empty((0, 2)))
    return ConvexPolygon(_monotone_chain(verts))


def project_extent(v, box: AxisBox) -> tuple[float, float]:
    """Range of ``<p, v>`` over the box."""
    lo = np.asarray(box.lo)
    hi = np.asarray(box.hi)
    v = np.asarray(v, dtype=float)
    a, b = v * lo, v * hi
    return float(np.minimum(a, b).sum()), float(np.maximum(a, b).sum())


# -- dominance hulls -------------------------------------------------------


def _lp_slack(w: np.ndarray, p: np.ndarray) -> float:
    """Largest s with a convex combination x of rows of ``w`` and x >= p + s."""
    k, d = w.shape
    # variables: lambda_1..lambda_k, s ; maximise s
    c = np.zeros(k + 1)
    c[-1] = -1.0
    a_ub = np.hstack([-w.T, np.ones((d, 1))])
    b_ub = -p
    a_eq = np.zeros((1, k + 1))
    a_eq[0, :k] = 1.0
    bounds = [(0, None)] * k + [(-2.0, 2.0)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"dominance LP failed: {res.message}")
    return float(res.x[-1])


class DominanceHull:
    """Membership in ``(CH(corners) + O_{-v}) ∩ [0,1]^d``.

    After flipping coordinates by ``v`` the body is everything in the cube
    dominated by a convex combination of corners.  Lowering any subset of a
    corner's coordinates to the cube floor stays inside the body, and the
    hull of all such lowered copies is exactly the body, so membership
    reduces to an ordinary convex hull: a polygon in 2D, Qhull facets
    above.  Coordinates where every corner sits on the floor are pinned and
    handled separately so the hull is always full-dimensional.
    """

    def __init__(self, corners, v):
        v = np.asarray(v, dtype=float)
        self.dim = len(v)
        self.v = np.where(v > 0, 1.0, -1.0)
        corners = _as_points(corners, self.dim) if len(corners) else np.empty((0, self.dim))
        self.corners = corners
        self._lo = np.where(self.v > 0, 0.0, -1.0)
        self._hi = self._lo + 1.0
        self.empty = len(corners) == 0
        if self.empty:
            return
        w = corners * self.v
        self._w = w
        pinned = np.all(w <= self._lo, axis=0)
        self._free = np.flatnonzero(~pinned)
        self._pinned = np.flatnonzero(pinned)
        wf = w[:, self._free]
        lof = self._lo[self._free]
        k = len(self._free)
        self._kind = {0: "point", 1: "interval"}.get(k, "polygon" if k == 2 else "facets")
        if k == 1:
            self._top = float(wf.max())
        elif k >= 2:
            lowered = np.concatenate(
                [np.where(mask, lof, wf) for mask in itertools.product((False, True), repeat=k)]
            )
            lowered = np.unique(lowered, axis=0)
            if k == 2:
                self._poly = ConvexPolygon(_monotone_chain(lowered))
                self._normals, self._offsets = polygon_halfplanes(self._poly)
            else:
                try:
                    hull = ConvexHull(lowered)
                    self._normals = hull.equations[:, :-1]
                    self._offsets = -hull.equations[:, -1]
                except QhullError:
                    self._kind = "lp"
                    self._wf = wf

    def _flip(self, points) -> np.ndarray:
        return _as_points(points, self.dim) * self.v

    def contains(self, points, tol: float = EPS) -> np.ndarray:
        """Closed membership, ``tol`` slack allowed on every constraint."""
        pf = self._flip(points)
        if self.empty:
            return np.zeros(len(pf), dtype=bool)
        ok = np.all((pf >= self._lo - tol) & (pf <= self._hi + tol), axis=1)
        if len(self._pinned):
            ok &= np.all(pf[:, self._pinned] <= self._lo[self._pinned] + tol, axis=1)
        x = pf[:, self._free]
        if self._kind == "interval":
            ok &= x[:, 0] <= self._top + tol
        elif self._kind in ("polygon", "facets"):
            ok &= np.max(x @ self._normals.T - self._offsets, axis=1) <= tol
        elif self._kind == "lp":
            for i in np.flatnonzero(ok):
                ok[i] = _lp_slack(self._wf, x[i]) >= -tol
        return ok

    def strictly_contains(self, points, eps: float = INTERIOR_EPS) -> np.ndarray:
        """Strict dominance: some hull point beats ``p`` by more than ``eps`` in every coordinate."""
        pts = _as_points(points, self.dim)
        return self.contains(pts + eps * self.v, tol=0.0)

    def polygon(self) -> ConvexPolygon:
        """The body as a polygon in original coordinates (d = 2 only)."""
        if self.dim != 2:
            raise InvalidGeometryError("polygon form only exists in 2D")
        if self.empty:
            return ConvexPolygon(np.empty((0, 2)))
        lowered = np.concatenate(
            [np.where(mask, self._lo, self._w) for mask in itertools.product((False, True), repeat=2)]
        )
        return ConvexPolygon(_monotone_chain(lowered * self.v))


def dominance_hull_membership(p, corners, v, method: str = "auto", tol: float = EPS) -> bool:
    """Is ``p`` in ``(CH(corners) + O_{-v}) ∩ [0,1]^d``?

    ``method="lp"`` solves the defining feasibility problem directly: find
    a convex combination ``x`` of the corners with ``x_j v_j >= p_j v_j``.
    ``"auto"`` uses the lowered-corner hull (the extreme chain in 2D).
    """
    corners = np.asarray(corners, dtype=float)
    if corners.size == 0:
        raise EmptyInputError("dominance hull of no corners")
    p = np.asarray(p, dtype=float).reshape(-1)
    d = len(p)
    corners = corners.reshape(-1, d)
    if method == "lp":
        vs = np.where(np.asarray(v) > 0, 1.0, -1.0)
        pf = p * vs
        lo = np.where(vs > 0, 0.0, -1.0)
        if np.any(pf < lo - tol) or np.any(pf > lo + 1 + tol):
            return False
        return _lp_slack(corners * vs, pf) >= -tol
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    return bool(DominanceHull(corners, v).contains(p, tol=tol)[0])


def box_intersects_sandwich(
    box: AxisBox, u_corners, l_corners, v, interior_eps: float = INTERIOR_EPS
) -> bool:
    """Does ``box`` meet ``U \\ L``, with L the open dominance hull of ``l_corners``?

    Valid when both bodies are dominance hulls and L's closure lies in U:
    then the box meets ``U \\ L`` iff its low corner (direction -v) is in U
    and its high corner is not strictly dominated by L.
    """
    u = DominanceHull(u_corners, v)
    if u.empty:
        raise EmptyInputError("U needs at least one corner")
    neg = tuple(-s for s in v)
    if not u.contains(box.corner(neg))[0]:
        return False
    if len(l_corners) == 0:
        return True
    lower = DominanceHull(l_corners, v)
    return not bool(lower.strictly_contains(box.corner(v), interior_eps)[0])


def sandwich_mask(lo: np.ndarray, hi: np.ndarray, upper: DominanceHull,
                  lower: DominanceHull, interior_eps: float = INTERIOR_EPS) -> np.ndarray:
    """Vectorised ``box_intersects_sandwich`` over boxes given as arrays."""
    v = upper.v
    low_corner = np.where(v > 0, lo, hi)
    high_corner = np.where(v > 0, hi, lo)
    keep = upper.contains(low_corner)
    if not lower.empty:
        keep &= ~lower.strictly_contains(high_corner, interior_eps)
    return keep


# -- volume ----------------------------------------------------------------

MC_CHUNK = 1 << 16


def _uniform_chunk(seed: int, chunk: int, m: int, d: int) -> np.ndarray:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, chunk], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key)).random((m, d))


def monte_carlo_symmdiff(member_a: MembershipFn, member_b: MembershipFn, d: int,
                         n_samples: int, seed: int) -> tuple[float, float]:
    """Estimate ``||A ⊕ B||`` inside ``[0,1]^d`` by uniform sampling.

    Predicates take an ``(m, d)`` array and return ``m`` booleans.  Sample
    chunk ``c`` is drawn from a Philox stream keyed by ``(seed, c)``, so the
    estimate depends only on the seed.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    disagree = 0
    for c, start in enumerate(range(0, n_samples, MC_CHUNK)):
        m = min(MC_CHUNK, n_samples - start)
        x = _uniform_chunk(seed, c, m, d)
        disagree += int(np.count_nonzero(np.asarray(member_a(x)) != np.asarray(member_b(x))))
    p = disagree / n_samples
    return p, math.sqrt(p * (1.0 - p) / n_samples)


class HullBody:
    """Membership in the convex hull of a finite point set, any dimension."""

    def __init__(self, points):
        pts = _as_points(points)
        if len(pts) == 0:
            raise EmptyInputError("hull of no points")
        self.points = pts
        self.dim = pts.shape[1]
        self._poly = None
        self._eq = None
        if self.dim == 2:
            self._poly = convex_hull_2d(pts)
        else:
            try:
                hull = ConvexHull(pts)
                self._eq = hull.equations
                self.volume = float(hull.volume)
            except (QhullError, ValueError):
                # flat hull: zero volume, membership by LP
                self.volume = 0.0

    def contains(self, points, tol: float = EPS) -> np.ndarray:
        x = _as_points(points, self.dim)
        if self._poly is not None:
            return polygon_contains(self._poly, x, tol)
        if self._eq is not None:
            return np.max(x @ self._eq[:, :-1].T + self._eq[:, -1], axis=1) <= tol
        out = np.zeros(len(x), dtype=bool)
        for i, p in enumerate(x):
            out[i] = _in_hull_lp(self.points, p, tol)
        return out


def _in_hull_lp(points: np.ndarray, p: np.ndarray, tol: float) -> bool:
    k, d = points.shape
    # minimise total violation t of |sum lambda x - p| <= t
    c = np.zeros(k + 1)
    c[-1] = 1.0
    a_ub = np.vstack([
        np.hstack([points.T, -np.ones((d, 1))]),
        np.hstack([-points.T, -np.ones((d, 1))]),
    ])
    b_ub = np.concatenate([p, -p])
    a_eq = np.zeros((1, k + 1))
    a_eq[0, :k] = 1.0
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0],
                  bounds=[(0, None)] * (k + 1), method="highs")
    return res.status == 0 and res.x[-1] <= tol


def cube_contains(points, tol: float = EPS) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    return np.all((x >= -tol) & (x <= 1 + tol), axis=1)


def boxes_as_arrays(boxes: Sequence[AxisBox]) -> tuple[np.ndarray, np.ndarray]:
    if not boxes:
        return np.empty((0, 0)), np.empty((0, 0))
    return np.array([b.lo for b in boxes]), np.array([b.hi for b in boxes])
