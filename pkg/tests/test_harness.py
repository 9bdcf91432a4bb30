import csv
import itertools
import math

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from oraclehull.errors import BudgetTooSmall, InsufficientData, InvalidGeometryError, PointSetFormatError, UsageError
from oraclehull.harness import (ADVERSARY_HEADER, CSV_HEADER, SweepConfig, TrialRecord,
                                adversary_drive, fit_rows, fit_slope, generate_points,
                                make_estimator, measure_error, points_from_spec, q_ladder,
                                records_to_csv, run_trial, summary_table, sweep, write_csv)
from oraclehull.oracle import OracleSession, PointSetBackend, save_points

# -- point sets ------------------------------------------------------------


def test_circle_points():
    pts = generate_points("circle", 4)
    assert np.allclose(pts, [(1, 0.5), (0.5, 1), (0, 0.5), (0.5, 0)], atol=1e-15)


def test_circle_is_planar():
    with pytest.raises(InvalidGeometryError):
        generate_points("circle", 8, d=3)


@pytest.mark.parametrize("kind", ["uniform", "clustered"])
def test_random_sets_are_seeded(kind):
    a = generate_points(kind, 100, 3, seed=7)
    b = generate_points(kind, 100, 3, seed=7)
    c = generate_points(kind, 100, 3, seed=8)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert a.shape == (100, 3) and a.min() >= 0 and a.max() <= 1


def test_point_specs(tmp_path):
    path = tmp_path / "p.txt"
    save_points(path, [[0.1, 0.2], [0.3, 0.4]])
    assert points_from_spec(f"file:{path}", 2, 0).shape == (2, 2)
    with pytest.raises(UsageError):
        points_from_spec(f"file:{path}", 3, 0)
    for bad in ["nope:3", "uniform:x", "file:", "uniform:0"]:
        with pytest.raises(UsageError):
            points_from_spec(bad, 2, 0)
    with pytest.raises(FileNotFoundError):
        points_from_spec(f"file:{tmp_path / 'missing.txt'}", 2, 0)
    (tmp_path / "bad.txt").write_text("2 1\n2.0 0.5\n")
    with pytest.raises(PointSetFormatError):
        points_from_spec(f"file:{tmp_path / 'bad.txt'}", 2, 0)


# -- trials ----------------------------------------------------------------


def test_run_trial_single_point():
    rec = run_trial("nao", 2, 4, [[0.6, 0.6]])
    assert rec.error == pytest.approx(0.25)
    assert rec.queries_used == 4 and rec.extreme_queries == 0
    assert rec.error_std == 0.0 and rec.iterations == 1


def test_run_trial_halfplane_exact():
    rec = run_trial("nah", 2, 4, [[0.5, 0.5]], oracle="exact")
    assert rec.error == pytest.approx(0.0, abs=1e-15)
    assert rec.extreme_queries == 4


@pytest.mark.parametrize("alg", ["nao", "ao", "nah", "ah"])
def test_queries_used_is_ledger_total(alg):
    pts = generate_points("uniform", 40, 2, seed=3)
    est = make_estimator(alg, 64, 2)
    mode = "non-adaptive" if alg in ("nao", "nah") else "adaptive"
    s = OracleSession(PointSetBackend(pts), mode=mode)
    est(s)
    rec = run_trial(alg, 2, 64, pts)
    assert rec.queries_used == s.ledger.total
    assert rec.error_std == 0.0


def test_halfplane_needs_the_plane():
    with pytest.raises(UsageError):
        make_estimator("ah", 16, 3)
    with pytest.raises(UsageError):
        run_trial("nao", 2, 4, [[0.1, 0.2, 0.3]])


def test_three_dimensional_error_is_monte_carlo():
    pts = generate_points("uniform", 30, 3, seed=1)
    rec = run_trial("nao", 3, 27, pts, seed=5)
    assert 0 < rec.error < 1 and rec.error_std > 0
    again = run_trial("nao", 3, 27, pts, seed=5)
    assert again.error == rec.error


def test_measure_error_flat_hull():
    pts = np.array([[0.2, 0.2, 0.2], [0.8, 0.8, 0.8]])
    s = OracleSession(PointSetBackend(pts), mode="non-adaptive")
    res = make_estimator("nao", 8, 3)(s)
    err, std = measure_error(res.hull, pts, seed=0)
    # the estimate is the hull of the two occupied grid cells; the truth has no volume
    corners = np.vstack([np.array(list(itertools.product((0.0, 0.5), repeat=3))),
                         np.array(list(itertools.product((0.5, 1.0), repeat=3)))])
    assert err == pytest.approx(ConvexHull(corners).volume, abs=5 * std)


# -- sweeps and CSV --------------------------------------------------------


def test_q_ladder():
    assert q_ladder("16:2048:2") == [16, 32, 64, 128, 256, 512, 1024, 2048]
    assert q_ladder("4:100:3") == [4, 12, 36]
    for bad in ["1:2", "0:4:2", "8:4:2", "4:16:1", "a:b:c"]:
        with pytest.raises(UsageError):
            q_ladder(bad)


def test_sweep_rows_and_determinism(tmp_path):
    cfg = SweepConfig("ao", 2, (16, 32, 64), trials=2, points="uniform:50", seed=4,
                      out=str(tmp_path / "a.csv"))
    sweep(cfg)
    sweep(SweepConfig(**{**cfg.__dict__, "out": str(tmp_path / "b.csv")}))
    a = (tmp_path / "a.csv").read_text()
    b = (tmp_path / "b.csv").read_text()
    assert a.splitlines()[0] == CSV_HEADER
    assert len(a.splitlines()) == 7
    strip = lambda text: [line.rsplit(",", 1)[0] for line in text.splitlines()]
    assert strip(a) == strip(b)
    assert "\r" not in a


def test_sweep_config_validation():
    with pytest.raises(UsageError):
        SweepConfig("ao", 2, (32, 16))
    with pytest.raises(UsageError):
        SweepConfig("ao", 2, (16,), trials=0)


def test_csv_round_trip(tmp_path):
    rec = TrialRecord("nao", 2, 4, 4, 0, 0.1 + 0.2, 0.0, 1, 9, "circle:8", 1.5)
    write_csv(tmp_path / "r.csv", [rec])
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert float(rows[0]["error"]) == 0.1 + 0.2
    assert records_to_csv([rec]).count("\n") == 2
    table = summary_table([rec]).splitlines()
    assert table[0].split() == ["q", "queries", "median_error"]
    assert table[1].split() == ["4", "4", "0.3"]


# -- fits ------------------------------------------------------------------


def _write(tmp_path, pairs, name="f.csv"):
    recs = [TrialRecord("ao", 2, q, q, 0, e, 0.0, 1, 0, "x", 0.0) for q, e in pairs]
    path = tmp_path / name
    write_csv(path, recs)
    return path


def test_fit_exact_power_laws(tmp_path):
    qs = [16, 32, 64, 128]
    f = fit_slope(_write(tmp_path, [(q, 1 / q) for q in qs]))
    assert f.slope == pytest.approx(-1.0, abs=1e-9)
    f = fit_slope(_write(tmp_path, [(q, 3 / math.sqrt(q)) for q in qs], "g.csv"))
    assert f.slope == pytest.approx(-0.5, abs=1e-9)
    assert f.intercept == pytest.approx(math.log2(3), abs=1e-9)


def test_fit_uses_medians_and_drops_zeros(tmp_path):
    pairs = [(16, 1 / 16), (16, 1.0), (16, 1 / 16), (32, 1 / 32), (32, 0.0), (32, 1 / 32),
             (64, 1 / 64)]
    f = fit_rows(pairs)
    assert f.slope == pytest.approx(-1.0, abs=1e-9)
    assert f.excluded == 1 and f.points == 3


def test_fit_needs_three_points(tmp_path):
    with pytest.raises(InsufficientData):
        fit_slope(_write(tmp_path, [(16, 0.1), (32, 0.05), (64, 0.0)]))


def test_fit_other_columns(tmp_path):
    path = _write(tmp_path, [(16, 0.1), (32, 0.1), (64, 0.1)])
    assert fit_slope(path, x="q", y="queries_used").slope == pytest.approx(1.0)


# -- adversary driver ------------------------------------------------------


def test_drive_nah_small():
    rep, row = adversary_drive("nah", 16)
    assert rep.extra["budget"] == 16
    assert row.startswith("nah,16,2,") and row.endswith(",true")
    with pytest.raises(BudgetTooSmall):
        adversary_drive("nah", 4)


def test_drive_appends_csv(tmp_path):
    out = tmp_path / "adv.csv"
    adversary_drive("ah", 16, out=out)
    adversary_drive("ah", 16, out=out)
    lines = out.read_text().splitlines()
    assert lines[0] == ADVERSARY_HEADER
    assert len(lines) == 3 and lines[1] == lines[2] and lines[1].endswith(",true")


def test_drive_rejects_mismatched_target():
    with pytest.raises(UsageError):
        adversary_drive("ao", 16, target="nao")
    with pytest.raises(UsageError):
        adversary_drive("nah", 16, target="ah")
    with pytest.raises(UsageError):
        adversary_drive("ah", 16, d=3)
