"""Range-emptiness oracles, the query ledger and extreme-halfplane queries.

A backend answers emptiness for closed boxes and closed halfspaces.  An
``OracleSession`` sits between an estimator and a backend, records every
query in a ``QueryLedger`` and enforces the batch discipline: an answer
can only be read after the batch that asked it has been closed.
"""
from __future__ import annotations

import contextlib
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import (AdaptivityViolation, BudgetViolation, EmptyInputError, InvalidGeometryError,
                     PointSetFormatError)
from .geometry import AxisBox, Halfplane, dot_rows

ORTH = "orth"
HALFPLANE = "halfplane"
EXTREME = "extreme"


# -- backends --------------------------------------------------------------


class Backend(Protocol):
    dim: int

    def boxes_empty(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray: ...

    def halfspaces_empty(self, normals: np.ndarray, offsets: np.ndarray) -> np.ndarray: ...

    def support(self, v) -> float: ...


class PointSetBackend:
    """Explicit finite point set."""

    def __init__(self, points):
        pts = np.array(points, dtype=float)
        if pts.ndim != 2:
            raise InvalidGeometryError("points must be an (n, d) array")
        if not np.all(np.isfinite(pts)):
            raise InvalidGeometryError("non-finite coordinates")
        pts.flags.writeable = False
        self.points = pts
        self.dim = pts.shape[1]

    def __len__(self) -> int:
        return len(self.points)

    def boxes_empty(self, lo, hi) -> np.ndarray:
        lo = np.asarray(lo, dtype=float).reshape(-1, self.dim)
        hi = np.asarray(hi, dtype=float).reshape(-1, self.dim)
        out = np.ones(len(lo), dtype=bool)
        if len(self.points) == 0:
            return out
        p = self.points[None, :, :]
        step = max(1, 4_000_000 // max(1, len(self.points) * self.dim))
        for s in range(0, len(lo), step):
            l, h = lo[s:s + step, None, :], hi[s:s + step, None, :]
            hit = np.all((p >= l) & (p <= h), axis=2)
            out[s:s + step] = ~hit.any(axis=1)
        return out

    def halfspaces_empty(self, normals, offsets) -> np.ndarray:
        normals = np.asarray(normals, dtype=float).reshape(-1, self.dim)
        offsets = np.asarray(offsets, dtype=float).reshape(-1)
        if len(self.points) == 0:
            return np.ones(len(normals), dtype=bool)
        return _halfspaces_empty(self.points, normals, offsets)

    def support(self, v) -> float:
        if len(self.points) == 0:
            raise EmptyInputError("support of an empty point set")
        return float(dot_rows(self.points, v).max())


def _halfspaces_empty(points: np.ndarray, normals: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    # same per-element arithmetic as dot_rows, so answers never depend on batch shape
    out = np.empty(len(normals), dtype=bool)
    step = max(1, 2_000_000 // max(1, len(points)))
    for s in range(0, len(normals), step):
        nb = normals[s:s + step]
        acc = nb[:, 0:1] * points[None, :, 0]
        for j in range(1, points.shape[1]):
            acc = acc + nb[:, j:j + 1] * points[None, :, j]
        out[s:s + step] = acc.min(axis=1) > offsets[s:s + step]
    return out


class SlabPatchBackend:
    """The continuum ``{x in [0,1]^d : <w, x> = level}``, optionally plus one point.

    Emptiness is decided analytically, so this stands in for an arbitrarily
    dense sample of the patch.  ``weights`` must be positive; keeping them
    unnormalised (e.g. all ones) keeps the straddle test exact.
    """

    def __init__(self, weights, level: float, extra=None):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or np.any(w <= 0):
            raise InvalidGeometryError("patch weights must be positive")
        if not 0.0 <= level <= float(w.sum()):
            raise InvalidGeometryError("patch misses the cube")
        self.weights = w
        self.level = float(level)
        self.dim = len(w)
        self.extra = None if extra is None else np.asarray(extra, dtype=float).reshape(self.dim)
        self._verts = self._patch_vertices()

    @property
    def normal(self) -> np.ndarray:
        return self.weights / np.linalg.norm(self.weights)

    @property
    def offset(self) -> float:
        return self.level / float(np.linalg.norm(self.weights))

    def _patch_vertices(self) -> np.ndarray:
        d, w = self.dim, self.weights
        verts = []
        for j in range(d):
            others = [k for k in range(d) if k != j]
            for bits in itertools.product((0.0, 1.0), repeat=d - 1):
                x = np.zeros(d)
                x[others] = bits
                xj = (self.level - float(np.dot(w[others], bits))) / w[j]
                if -1e-15 <= xj <= 1 + 1e-15:
                    x[j] = min(1.0, max(0.0, xj))
                    verts.append(x)
        return np.unique(np.array(verts).reshape(-1, d), axis=0)

    def points_for_support(self) -> np.ndarray:
        if self.extra is None:
            return self._verts
        return np.vstack([self._verts, self.extra])

    def boxes_empty(self, lo, hi) -> np.ndarray:
        lo = np.asarray(lo, dtype=float).reshape(-1, self.dim)
        hi = np.asarray(hi, dtype=float).reshape(-1, self.dim)
        clo, chi = np.maximum(lo, 0.0), np.minimum(hi, 1.0)
        inside = np.all(clo <= chi, axis=1)
        smin = dot_rows(clo, self.weights)
        smax = dot_rows(chi, self.weights)
        hit = inside & (smin <= self.level) & (self.level <= smax)
        if self.extra is not None:
            hit |= np.all((self.extra >= lo) & (self.extra <= hi), axis=1)
        return ~hit

    def halfspaces_empty(self, normals, offsets) -> np.ndarray:
        normals = np.asarray(normals, dtype=float).reshape(-1, self.dim)
        offsets = np.asarray(offsets, dtype=float).reshape(-1)
        return _halfspaces_empty(self.points_for_support(), normals, offsets)

    def support(self, v) -> float:
        return float(dot_rows(self.points_for_support(), v).max())


# -- ledger ----------------------------------------------------------------


@dataclass
class _Segment:
    batch: int
    kind: str
    desc: np.ndarray
    answers: np.ndarray


@dataclass
class QueryLedger:
    """Every query asked, grouped into batches, in the order asked.

    ``mode="non-adaptive"`` allows a single batch; opening a second one
    raises ``AdaptivityViolation``.
    """

    mode: str = "adaptive"
    segments: list[_Segment] = field(default_factory=list)
    batches: int = 0
    violations: int = 0
    extreme_calls: int = 0

    def __post_init__(self):
        if self.mode not in ("adaptive", "non-adaptive"):
            raise ValueError(f"unknown ledger mode {self.mode!r}")

    def counts(self) -> dict[str, int]:
        out = {ORTH: 0, HALFPLANE: 0, EXTREME: 0}
        for s in self.segments:
            out[s.kind] += len(s.answers)
        return out

    @property
    def total(self) -> int:
        return sum(len(s.answers) for s in self.segments)

    def emptiness_total(self) -> int:
        c = self.counts()
        return c[ORTH] + c[HALFPLANE]

    def transcript(self) -> bytes:
        """One line per query: sequence number, batch, kind, descriptor, answer."""
        lines = []
        seq = 0
        for s in self.segments:
            for row, ans in zip(s.desc.tolist(), s.answers.tolist()):
                desc = " ".join(repr(float(x)) for x in row)
                lines.append(f"{seq} {s.batch} {s.kind} {desc} {ans!r}")
                seq += 1
        return ("\n".join(lines) + "\n").encode() if lines else b""


@dataclass(frozen=True)
class LedgerReport:
    totals: dict
    total: int
    batches: int
    adaptive: bool
    violations: int
    extreme_calls: int


def ledger_report(ledger: QueryLedger) -> LedgerReport:
    counts = ledger.counts()
    return LedgerReport(
        totals=counts,
        total=sum(counts.values()),
        batches=ledger.batches,
        adaptive=not (ledger.batches <= 1 and ledger.violations == 0),
        violations=ledger.violations,
        extreme_calls=ledger.extreme_calls,
    )


# -- extreme oracle config and the simulation grid -------------------------


EXTREME_MODES = ("exact", "simulated-nonadaptive", "simulated-adaptive", "worst-case-shift")


@dataclass(frozen=True)
class ExtremeOracleConfig:
    mode: str = "exact"
    delta: float = 0.0

    def __post_init__(self):
        if self.mode not in EXTREME_MODES:
            raise ValueError(f"unknown extreme-oracle mode {self.mode!r}")
        if not (self.delta >= 0 and math.isfinite(self.delta)):
            raise ValueError("delta must be finite and non-negative")
        if self.mode.startswith("simulated") and self.delta <= 0:
            raise ValueError("simulated extreme queries need delta > 0")

    @property
    def simulated(self) -> bool:
        return self.mode.startswith("simulated")


def cube_extent(v) -> tuple[float, float]:
    """Range of ``<p, v>`` over the unit cube."""
    v = np.asarray(v, dtype=float)
    return float(np.minimum(v, 0).sum()), float(np.maximum(v, 0).sum())


@dataclass(frozen=True)
class ExtremeGrid:
    """Thresholds ``t_i = o_max + delta/2 - i*delta`` for ``i = 0..n``.

    Query ``i`` asks whether ``{<p,v> >= t_i}`` is empty; it is sent to the
    oracle as the halfplane with normal ``-v`` and offset ``-t_i``.  ``t_0``
    lies ``delta/2`` above the cube's extent (always empty) and ``t_n`` at
    least ``delta/2`` below it (never empty for a nonempty set).
    Thresholds are computed on demand since n can be huge.
    """

    v: tuple[float, ...]
    delta: float
    top: float
    n: int

    @classmethod
    def build(cls, v, delta: float) -> "ExtremeGrid":
        o_min, o_max = cube_extent(v)
        n = math.ceil((o_max - o_min) / delta) + 1
        return cls(tuple(float(x) for x in v), float(delta), o_max + delta / 2, n)

    def threshold(self, i: int) -> float:
        return self.top - self.delta * i

    @property
    def thresholds(self) -> np.ndarray:
        return self.top - self.delta * np.arange(self.n + 1)

    def query(self, i: int) -> tuple[np.ndarray, float]:
        return -np.asarray(self.v), -self.threshold(i)

    def queries(self) -> tuple[np.ndarray, np.ndarray]:
        normals = np.tile(-np.asarray(self.v), (self.n + 1, 1))
        return normals, -self.thresholds

    def answer(self, i: int) -> Halfplane:
        return Halfplane(self.v, self.threshold(i))

    def resolve(self, empty: np.ndarray) -> Halfplane:
        """Answer from the full emptiness vector: the largest empty index."""
        idx = np.flatnonzero(np.asarray(empty, dtype=bool))
        return self.answer(int(idx.max()) if len(idx) else 0)


# -- sessions --------------------------------------------------------------


class Ticket:
    """Handle to an answer that becomes readable when its batch closes."""

    __slots__ = ("_batch", "_value", "_resolve")

    def __init__(self, batch: "Batch", resolve=None):
        self._batch = batch
        self._value = None
        self._resolve = resolve

    @property
    def value(self):
        if not self._batch.closed:
            self._batch.session.ledger.violations += 1
            raise AdaptivityViolation("answer read before its batch was closed")
        return self._value


class Batch:
    def __init__(self, session: "OracleSession"):
        self.session = session
        self.closed = False
        self._pending: list[tuple[str, np.ndarray, np.ndarray | None, Ticket]] = []

    def _check_open(self):
        if self.closed:
            raise RuntimeError("batch already closed")

    def boxes(self, lo, hi) -> Ticket:
        self._check_open()
        d = self.session.dim
        lo = np.asarray(lo, dtype=float).reshape(-1, d)
        hi = np.asarray(hi, dtype=float).reshape(-1, d)
        if np.any(lo > hi):
            raise InvalidGeometryError("box with lo > hi")
        t = Ticket(self)
        self._pending.append((ORTH, np.hstack([lo, hi]), None, t))
        return t

    def box(self, box: AxisBox) -> Ticket:
        t = self.boxes(box.lo, box.hi)
        t._resolve = lambda a: bool(a[0])
        return t

    def halfplanes(self, normals, offsets) -> Ticket:
        self._check_open()
        d = self.session.dim
        normals = np.asarray(normals, dtype=float).reshape(-1, d)
        offsets = np.asarray(offsets, dtype=float).reshape(-1, 1)
        t = Ticket(self)
        self._pending.append((HALFPLANE, np.hstack([normals, offsets]), None, t))
        return t

    def halfplane(self, h: Halfplane) -> Ticket:
        t = self.halfplanes(h.normal, [h.offset])
        t._resolve = lambda a: bool(a[0])
        return t

    def extreme(self, v, config: ExtremeOracleConfig) -> Ticket:
        """Queue an extreme query; its ticket resolves to a ``Halfplane``."""
        self._check_open()
        v = tuple(float(x) for x in v)
        self.session.count_extreme()
        if config.mode == "simulated-adaptive":
            raise ValueError("adaptive simulation cannot be part of a batch")
        if config.mode == "simulated-nonadaptive":
            grid = ExtremeGrid.build(v, config.delta)
            t = self.halfplanes(*grid.queries())
            t._resolve = grid.resolve
            return t
        shift = config.delta if config.mode == "worst-case-shift" else 0.0
        t = Ticket(self, resolve=lambda b: Halfplane(v, float(b[0]) + shift))
        self._pending.append((EXTREME, np.array([v]), None, t))
        return t

    def close(self):
        if self.closed:
            return
        s = self.session
        if s.ledger.mode == "non-adaptive" and s.ledger.batches >= 1 and self._pending:
            s.ledger.violations += 1
            raise AdaptivityViolation("non-adaptive session already used its batch")
        self.closed = True
        if not self._pending:
            return
        s.ledger.batches += 1
        bid = s.ledger.batches
        d = s.dim
        for kind, desc, _, ticket in self._pending:
            if kind == ORTH:
                ans = s.backend.boxes_empty(desc[:, :d], desc[:, d:])
            elif kind == HALFPLANE:
                ans = s.backend.halfspaces_empty(desc[:, :d], desc[:, d])
            else:
                if getattr(s.backend, "dim", None) is not None and _is_empty(s.backend):
                    raise EmptyInputError("extreme query on an empty point set")
                ans = np.array([s.backend.support(desc[0])])
            s.ledger.segments.append(_Segment(bid, kind, desc, ans))
            ticket._value = ticket._resolve(ans) if ticket._resolve else ans


def _is_empty(backend) -> bool:
    return isinstance(backend, PointSetBackend) and len(backend) == 0


class OracleSession:
    """An estimator's exclusive view of a backend, with query accounting.

    ``extreme_budget`` caps the number of extreme queries; one more raises
    ``BudgetViolation``.
    """

    def __init__(self, backend, mode: str = "adaptive", extreme_budget: int | None = None):
        self.backend = backend
        self.ledger = QueryLedger(mode=mode)
        self.extreme_budget = extreme_budget

    def count_extreme(self) -> None:
        if self.extreme_budget is not None and self.ledger.extreme_calls >= self.extreme_budget:
            raise BudgetViolation(f"more than {self.extreme_budget} extreme queries")
        self.ledger.extreme_calls += 1

    @property
    def dim(self) -> int:
        return self.backend.dim

    @contextlib.contextmanager
    def batch(self):
        b = Batch(self)
        yield b
        b.close()

    def orth_batch(self, lo, hi) -> np.ndarray:
        with self.batch() as b:
            t = b.boxes(lo, hi)
        return t.value

    def halfplane_batch(self, normals, offsets) -> np.ndarray:
        with self.batch() as b:
            t = b.halfplanes(normals, offsets)
        return t.value

    def orth_empty(self, box: AxisBox) -> bool:
        with self.batch() as b:
            t = b.box(box)
        return t.value

    def halfplane_empty(self, h: Halfplane) -> bool:
        with self.batch() as b:
            t = b.halfplane(h)
        return t.value

    def extreme(self, v, config: ExtremeOracleConfig) -> Halfplane:
        if config.mode == "simulated-adaptive":
            return simulate_extreme_adaptive(self, v, config.delta)
        with self.batch() as b:
            t = b.extreme(v, config)
        return t.value

    def transcript(self) -> bytes:
        return self.ledger.transcript()


def orth_empty(backend, box: AxisBox, ledger_session: OracleSession | None = None) -> bool:
    session = ledger_session or OracleSession(backend)
    return session.orth_empty(box)


def halfplane_empty(backend, h: Halfplane, ledger_session: OracleSession | None = None) -> bool:
    session = ledger_session or OracleSession(backend)
    return session.halfplane_empty(h)


def extreme_query(session: OracleSession, v, config: ExtremeOracleConfig) -> Halfplane:
    return session.extreme(v, config)


def simulate_extreme_nonadaptive(session: OracleSession, v, delta: float) -> Halfplane:
    """Query the whole threshold grid in one batch."""
    return session.extreme(v, ExtremeOracleConfig("simulated-nonadaptive", delta))


def simulate_extreme_adaptive(session: OracleSession, v, delta: float) -> Halfplane:
    """Binary search for the largest empty threshold.

    The last grid element is asked first; it covers the cube, so a "yes"
    means the point set is empty.  Then the usual two-pointer loop with
    ``lo`` known empty and ``hi`` known nonempty.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    grid = ExtremeGrid.build(v, delta)
    session.count_extreme()
    if session.halfplane_batch(*_one(grid, grid.n))[0]:
        raise EmptyInputError("extreme query on an empty point set")
    lo, hi = 0, grid.n
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if session.halfplane_batch(*_one(grid, mid))[0]:
            lo = mid
        else:
            hi = mid
    return grid.answer(lo)


def _one(grid: ExtremeGrid, i: int):
    n, c = grid.query(i)
    return n.reshape(1, -1), np.array([c])


# -- point-set files -------------------------------------------------------


def load_points(path) -> np.ndarray:
    """Read the ``d n`` header format; every coordinate must lie in [0,1]."""
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise PointSetFormatError("empty file")
    head = lines[0].split()
    try:
        d, n = int(head[0]), int(head[1])
    except (ValueError, IndexError) as e:
        raise PointSetFormatError(f"bad header {lines[0]!r}") from e
    if len(head) != 2 or d < 1 or n < 0:
        raise PointSetFormatError(f"bad header {lines[0]!r}")
    if len(lines) - 1 != n:
        raise PointSetFormatError(f"header says {n} points, file has {len(lines) - 1}")
    rows = []
    for k, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        if len(parts) != d:
            raise PointSetFormatError(f"line {k}: expected {d} values")
        try:
            row = [float(x) for x in parts]
        except ValueError as e:
            raise PointSetFormatError(f"line {k}: {e}") from e
        if not all(0.0 <= x <= 1.0 for x in row):
            raise PointSetFormatError(f"line {k}: coordinate outside [0,1]")
        rows.append(row)
    return np.array(rows, dtype=float).reshape(n, d)


def save_points(path, points) -> None:
    pts = np.asarray(points, dtype=float)
    n, d = pts.shape
    body = "".join(" ".join(repr(float(x)) for x in row) + "\n" for row in pts)
    Path(path).write_text(f"{d} {n}\n" + body)
