"""Shared reference implementations used as independent oracles in tests.

These are deliberately naive (loops, brute force) and share no code with
the package beyond plain numpy.
"""
import itertools
import math

import numpy as np
import pytest


def shoelace(pts) -> float:
    pts = np.asarray(pts, dtype=float)
    if len(pts) < 3:
        return 0.0
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


def sort_ccw(pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    c = pts.mean(axis=0)
    return pts[np.argsort(np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0]))]


def brute_halfplane_polygon(normals, offsets, clip=(0.0, 1.0)):
    """Vertices of (∩ H) ∩ box by enumerating pairwise line intersections."""
    lo, hi = clip
    lines = [(np.asarray(n, float), float(b)) for n, b in zip(normals, offsets)]
    lines += [(np.array([1.0, 0.0]), hi), (np.array([-1.0, 0.0]), -lo),
              (np.array([0.0, 1.0]), hi), (np.array([0.0, -1.0]), -lo)]
    verts = []
    for (n1, b1), (n2, b2) in itertools.combinations(lines, 2):
        m = np.array([n1, n2])
        if abs(np.linalg.det(m)) < 1e-14:
            continue
        x = np.linalg.solve(m, [b1, b2])
        if all(n @ x <= b + 1e-9 for n, b in lines):
            verts.append(x)
    if not verts:
        return np.empty((0, 2))
    verts = np.unique(np.round(np.array(verts), 12), axis=0)
    return sort_ccw(verts) if len(verts) >= 3 else verts


def lowered_max_2d(corners, p, v, eps=0.0):
    """Exact 2D dominance test without hulls.

    In coordinates flipped by v, is there a convex combination x of the
    corners with x >= p + eps in both coordinates?  The optimum of
    ``max x2 s.t. x1 >= p1 + eps`` over the hull is attained on a segment
    between two corners, so scanning all pairs is exact.
    """
    w = np.asarray(corners, float) * v
    t = np.asarray(p, float) * v + eps
    best = -np.inf
    for a, b in itertools.combinations_with_replacement(range(len(w)), 2):
        pa, pb = w[a], w[b]
        # parametrise x = pa + s (pb - pa), s in [0, 1], keep x1 >= t1
        d1 = pb[0] - pa[0]
        if abs(d1) < 1e-300:
            if pa[0] < t[0]:
                continue
            s_lo, s_hi = 0.0, 1.0
        elif d1 > 0:
            s_lo, s_hi = max(0.0, (t[0] - pa[0]) / d1), 1.0
        else:
            s_lo, s_hi = 0.0, min(1.0, (t[0] - pa[0]) / d1)
        if s_lo > s_hi:
            continue
        for s in (s_lo, s_hi):
            best = max(best, pa[1] + s * (pb[1] - pa[1]))
    return best >= t[1]


def lowered_max_2d_many(corners, pts, v, eps=0.0):
    """``lowered_max_2d`` for many points at once (same corner-pair scan)."""
    w = np.asarray(corners, float) * v
    t = np.asarray(pts, float) * v + eps
    best = np.full(len(t), -np.inf)
    for a, b in itertools.combinations_with_replacement(range(len(w)), 2):
        pa, pb = w[a], w[b]
        d1 = pb[0] - pa[0]
        if abs(d1) < 1e-300:
            s_lo = np.where(pa[0] >= t[:, 0], 0.0, np.inf)
            s_hi = np.where(pa[0] >= t[:, 0], 1.0, -np.inf)
        elif d1 > 0:
            s_lo, s_hi = np.maximum(0.0, (t[:, 0] - pa[0]) / d1), np.ones(len(t))
        else:
            s_lo, s_hi = np.zeros(len(t)), np.minimum(1.0, (t[:, 0] - pa[0]) / d1)
        ok = s_lo <= s_hi
        for s in (s_lo, s_hi):
            val = np.where(ok, pa[1] + np.where(ok, s, 0.0) * (pb[1] - pa[1]), -np.inf)
            best = np.maximum(best, val)
    return best >= t[:, 1]


def sandwich_instance(rng, v):
    """U and L corners as the adaptive orthogonal search builds them at some
    level, plus one child box of the next level."""
    pts = rng.random((int(rng.integers(1, 12)), 2))
    level = int(rng.integers(1, 5))
    r = 2 ** level
    cells = np.unique(np.minimum(np.floor(pts * r), r - 1), axis=0)
    lo, hi = cells / r, (cells + 1) / r
    u = np.where(np.array(v) > 0, hi, lo)
    low = np.where(np.array(v) > 0, lo, hi)
    child = 2 * r
    k = rng.integers(0, child, 2)
    return u, low, (k / child, (k + 1) / child)


def brute_sandwich(box, u, low, v, step=2.0 ** -10, eps=1e-12):
    """Does some grid point of the box lie in U but not strictly inside L?"""
    lo, hi = box
    xs = np.arange(lo[0], hi[0] + step / 2, step)
    ys = np.arange(lo[1], hi[1] + step / 2, step)
    grid = np.stack(np.meshgrid(xs, ys), -1).reshape(-1, 2)
    grid = grid[np.all((grid >= 0) & (grid <= 1), axis=1)]
    v = np.array(v, float)
    return bool(np.any(lowered_max_2d_many(u, grid, v) & ~lowered_max_2d_many(low, grid, v, eps)))


def in_cube(p, tol=0.0):
    p = np.asarray(p, float)
    return bool(np.all(p >= -tol) and np.all(p <= 1 + tol))


def random_convex_polygon(rng, k=None, scale=None):
    k = k or int(rng.integers(3, 9))
    centre = rng.uniform(0.25, 0.75, 2)
    r = scale or rng.uniform(0.1, 0.25)
    ang = np.sort(rng.uniform(0, 2 * math.pi, k))
    return centre + r * np.column_stack([np.cos(ang), np.sin(ang)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
