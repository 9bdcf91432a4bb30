import itertools
import math

import numpy as np
import pytest

from conftest import brute_halfplane_polygon, shoelace
from oraclehull.algorithms import (adaptive_halfplane, adaptive_orthogonal, extreme_budget_for,
                                   grid_cells, integer_root, non_adaptive_halfplane,
                                   non_adaptive_orthogonal, orthant_iterations)
from oraclehull.errors import BudgetTooSmall, EmptyInputError
from oraclehull.geometry import (ConvexPolygon, DominanceHull, convex_hull_2d,
                                 dominance_hull_membership,
                                 symmetric_difference_area)
from oraclehull.harness import generate_points
from oraclehull.oracle import OracleSession, PointSetBackend, ledger_report

CORNERS_2D = np.array(list(itertools.product((0.0, 1.0), repeat=2)))


def session(points, mode="adaptive"):
    return OracleSession(PointSetBackend(np.asarray(points, float)), mode=mode)


def error_2d(result, points):
    return symmetric_difference_area(result.hull.polygon, convex_hull_2d(points))


# -- helpers ---------------------------------------------------------------


@pytest.mark.parametrize("q,d,r", [(1, 2, 1), (4, 2, 2), (15, 2, 3), (16, 2, 4), (27, 3, 3),
                                   (26, 3, 2), (1000, 3, 10), (1 << 20, 2, 1024)])
def test_integer_root(q, d, r):
    assert integer_root(q, d) == r


def test_grid_cells_tile_the_cube():
    lo, hi = grid_cells(3, 2)
    assert len(lo) == 9
    assert np.prod(hi - lo, axis=1).sum() == pytest.approx(1.0)


@pytest.mark.parametrize("q,d,t", [(2, 2, 1), (16, 2, 4), (1024, 2, 10), (16, 3, 2), (64, 3, 3), (2048, 2, 11)])
def test_orthant_iterations(q, d, t):
    assert orthant_iterations(q, d) == t


def test_extreme_budget_mapping():
    for q in [10, 16, 100, 1000, 1 << 15]:
        k = extreme_budget_for(q)
        cost = lambda m: m * (math.ceil(math.log2(math.sqrt(2) * m ** 4)) + 1)
        assert cost(k) <= q < cost(k + 1)


# -- non-adaptive orthogonal -----------------------------------------------


def test_nao_single_point():
    s = session([[0.6, 0.6]], "non-adaptive")
    res = non_adaptive_orthogonal(s, 4)
    assert shoelace(res.hull.polygon.vertices) == pytest.approx(0.25)
    assert np.allclose(sorted(map(tuple, res.hull.polygon.vertices)),
                       [(0.5, 0.5), (0.5, 1), (1, 0.5), (1, 1)])
    assert error_2d(res, [[0.6, 0.6]]) == pytest.approx(0.25)
    assert res.emptiness_queries == 4
    rep = ledger_report(s.ledger)
    assert rep.batches == 1 and not rep.adaptive


def test_nao_cube_corners_exact():
    for q in (1, 4, 9, 100):
        res = non_adaptive_orthogonal(session(CORNERS_2D, "non-adaptive"), q)
        assert error_2d(res, CORNERS_2D) == pytest.approx(0.0, abs=1e-15)


def test_nao_output_covers_input(rng):
    for _ in range(30):
        pts = rng.random((20, 2))
        res = non_adaptive_orthogonal(session(pts, "non-adaptive"), 49)
        assert res.hull.contains(pts).all()


def test_nao_three_dimensions(rng):
    pts = rng.random((30, 3))
    res = non_adaptive_orthogonal(session(pts, "non-adaptive"), 27)
    assert res.hull.contains(pts).all()
    assert res.emptiness_queries == 27


def test_nao_empty_set():
    with pytest.raises(EmptyInputError):
        non_adaptive_orthogonal(session(np.empty((0, 2)), "non-adaptive"), 4)


# -- adaptive orthogonal ---------------------------------------------------


def test_ao_cube_corners():
    res = adaptive_orthogonal(session(CORNERS_2D), 64)
    assert error_2d(res, CORNERS_2D) == pytest.approx(0.0, abs=1e-15)


def test_ao_minimum_budget():
    res = adaptive_orthogonal(session([[0.3, 0.4]]), 2)
    assert res.iterations == 1
    assert res.emptiness_queries == 4  # one unit-cube query per orthant
    for tr in res.trace["orthants"].values():
        assert len(tr) == 1 and tr[0]["boxes"] == 1


def test_ao_is_adaptive():
    s = session([[0.3, 0.4], [0.7, 0.2]])
    adaptive_orthogonal(s, 64)
    assert ledger_report(s.ledger).adaptive


def test_ao_sandwich_invariant(rng):
    for _ in range(6):
        pts = rng.random((12, 2))
        res = adaptive_orthogonal(session(pts), 64)
        for v, trace in res.trace["orthants"].items():
            v = np.asarray(v, float)
            for step in trace:
                # every point of P lies in U
                for p in pts:
                    assert dominance_hull_membership(p, step["u_corners"], v, method="lp")
                # every L corner is dominated by a combination of P
                for c in step["l_corners"]:
                    assert dominance_hull_membership(c, pts, v, method="lp")


def test_ao_upper_hulls_shrink(rng):
    pts = rng.random((15, 2))
    res = adaptive_orthogonal(session(pts), 256)
    grid = np.stack(np.meshgrid(np.linspace(0, 1, 101), np.linspace(0, 1, 101)), -1).reshape(-1, 2)
    for v, trace in res.trace["orthants"].items():
        prev = None
        for step in trace:
            cur = DominanceHull(step["u_corners"], np.asarray(v, float)).contains(grid)
            if prev is not None:
                assert not (cur & ~prev).any()
            prev = cur


def test_ao_superset_and_accuracy(rng):
    for _ in range(10):
        pts = rng.random((25, 2))
        res = adaptive_orthogonal(session(pts), 256)
        assert res.hull.contains(pts).all()
        truth = convex_hull_2d(pts)
        inter = symmetric_difference_area(res.hull.polygon, truth)
        assert inter <= 0.1


def test_ao_three_dimensions(rng):
    pts = rng.random((20, 3))
    res = adaptive_orthogonal(session(pts), 64)
    assert res.hull.contains(pts).all()
    assert res.iterations == 3


# -- non-adaptive halfplane ------------------------------------------------


def test_nah_point_exact():
    res = non_adaptive_halfplane(session([[0.5, 0.5]], "non-adaptive"), 4, oracle="exact")
    assert error_2d(res, [[0.5, 0.5]]) == pytest.approx(0.0, abs=1e-15)


def test_nah_cube_corners_fill_the_cube():
    res = non_adaptive_halfplane(session(CORNERS_2D, "non-adaptive"), 8, oracle="exact")
    assert shoelace(res.hull.polygon.vertices) == pytest.approx(1.0)


def test_nah_worst_shift_box():
    res = non_adaptive_halfplane(session([[0.5, 0.5]], "non-adaptive"), 4, delta=0.1,
                                 oracle="worst-shift")
    verts = sorted(map(tuple, np.round(res.hull.polygon.vertices, 12)))
    assert np.allclose(verts, [(0.4, 0.4), (0.4, 0.6), (0.6, 0.4), (0.6, 0.6)])
    assert error_2d(res, [[0.5, 0.5]]) == pytest.approx(0.04)


def test_nah_small_budget():
    with pytest.raises(BudgetTooSmall):
        non_adaptive_halfplane(session([[0.5, 0.5]], "non-adaptive"), 2)


def test_nah_matches_brute_intersection(rng):
    for _ in range(20):
        pts = rng.random((10, 2))
        res = non_adaptive_halfplane(session(pts, "non-adaptive"), 12, oracle="exact")
        hs = res.trace["halfplanes"]
        ref = brute_halfplane_polygon([h.normal for h in hs], [h.offset for h in hs])
        assert shoelace(res.hull.polygon.vertices) == pytest.approx(shoelace(ref), abs=1e-9)


def test_nah_simulated_is_one_batch(rng):
    s = session(rng.random((10, 2)), "non-adaptive")
    res = non_adaptive_halfplane(s, 16)
    rep = ledger_report(s.ledger)
    assert rep.batches == 1 and not rep.adaptive
    assert res.hull.contains(s.backend.points).all()


# -- adaptive halfplane ----------------------------------------------------


def test_ah_single_point_exact():
    res = adaptive_halfplane(session([[0.5, 0.5]]), 16, oracle="exact")
    assert res.iterations == 1
    assert res.extreme_queries == 4
    assert error_2d(res, [[0.5, 0.5]]) == pytest.approx(0.0, abs=1e-15)


def test_ah_min_gap(rng):
    for _ in range(100):
        q = int(rng.choice([4, 8, 16, 32]))
        pts = rng.random((int(rng.integers(1, 30)), 2))
        res = adaptive_halfplane(session(pts), q, oracle="exact")
        assert res.trace["min_gap"] >= 1 / (12 * q * q)


@pytest.mark.parametrize("q", [8, 16, 32, 64, 128, 256])
def test_ah_iterations_on_circle(q):
    pts = generate_points("circle", 512)
    res = adaptive_halfplane(session(pts), q, oracle="exact")
    assert res.iterations <= 2 * math.log2(q) + 8


def test_ah_extreme_cap():
    pts = generate_points("circle", 64)
    res = adaptive_halfplane(session(pts), 64, oracle="exact", max_extreme=10)
    assert res.extreme_queries == 10 and res.trace["truncated"]
    res = adaptive_halfplane(session(pts), 64, oracle="exact", max_extreme=2)
    assert res.extreme_queries == 2
    with pytest.raises(BudgetTooSmall):
        adaptive_halfplane(session(pts), 64, max_extreme=0)


def test_ah_simulated_covers_input(rng):
    pts = rng.random((20, 2))
    res = adaptive_halfplane(session(pts), 16)
    assert res.hull.contains(pts).all()
    assert error_2d(res, pts) < 0.05


# -- cross-cutting ---------------------------------------------------------


ESTIMATORS = {
    "nao": (lambda s: non_adaptive_orthogonal(s, 64), "non-adaptive"),
    "ao": (lambda s: adaptive_orthogonal(s, 64), "adaptive"),
    "nah": (lambda s: non_adaptive_halfplane(s, 16), "non-adaptive"),
    "ah": (lambda s: adaptive_halfplane(s, 16), "adaptive"),
}


@pytest.mark.parametrize("name", sorted(ESTIMATORS))
def test_deterministic_and_in_cube(name, rng):
    fn, mode = ESTIMATORS[name]
    pts = rng.random((30, 2))
    a, b = session(pts, mode), session(pts, mode)
    ra, rb = fn(a), fn(b)
    assert a.transcript() == b.transcript()
    va = np.asarray(ra.hull.polygon.vertices)
    assert np.array_equal(va, np.asarray(rb.hull.polygon.vertices))
    assert np.all(va >= -1e-12) and np.all(va <= 1 + 1e-12)
    assert isinstance(ra.hull.polygon, ConvexPolygon)
