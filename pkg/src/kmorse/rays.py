"""Geodesic rays from the basepoint, flat itineraries and quasi-geodesic paths.

A ray is produced lazily from moves, each starting where the previous one ended:

    ("flat", i, j)         straight segment to lattice point (i, j) of the current flat
    ("edge", sign, count)  count g3-edges downward (count may be math.inf)
    ("dir", dx, dy)        straight forever along (dx, dy)

Rays from the basepoint only ever descend, so every flat is entered at its
local origin and each flat move starts at (0, 0).
"""
from __future__ import annotations

import bisect
import math
import re
import threading
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .space import (
    BASEPOINT,
    TOL,
    EdgeBit,
    EdgeLeg,
    FlatAddress,
    FlatLeg,
    FlatPoint,
    Leg,
    Point,
    Vertex,
    Y0,
    _descend,
    _reverse,
    distance,
    distance_parts,
    geodesic_legs,
    norm,
    sample_ball,
)
from .sublinear import SublinearFn, distortion_constants

Move = tuple


# ---------------------------------------------------------------- exact lengths


def _int_length(leg: Leg) -> int | None:
    """Length of the leg when it is a whole number, else None."""
    if isinstance(leg, EdgeLeg):
        return None if leg.count == math.inf else int(leg.count)
    if isinstance(leg, FlatLeg) and not leg.unbounded:
        dx, dy = leg.exit[0] - leg.entry[0], leg.exit[1] - leg.entry[1]
        if dx.is_integer() and dy.is_integer():
            n2 = int(dx) ** 2 + int(dy) ** 2
            r = math.isqrt(n2)
            if r * r == n2:
                return r
    return None


def _length_parts(leg: Leg) -> tuple[int, float]:
    n = _int_length(leg)
    return (n, 0.0) if n is not None else (0, leg.length)


def _as_int(s):
    if isinstance(s, float) and s.is_integer() and s != math.inf:
        return int(s)
    return s


def _run_pieces(flat: FlatAddress, i: int, j: int, sign: int, a, b) -> list[Leg]:
    """Legs covering down-parameters [a, b] of the run hanging from (flat, i, j)."""
    a, b = _as_int(a), _as_int(b)
    out: list[Leg] = []
    if b <= a:
        return out
    ia = math.floor(a)
    if a != ia:
        end = min(b, ia + 1)
        f, x, y = _descend(flat, i, j, sign, ia)
        out.append(EdgeBit(f, x, y, sign, a - ia, end - ia))
        if end == b:
            return out
        a = ia + 1
    ib = b if b == math.inf else math.floor(b)
    if ib > a:
        f, x, y = _descend(flat, i, j, sign, a)
        out.append(EdgeLeg(f, x, y, sign, ib - a))
    if b != ib:
        f, x, y = _descend(flat, i, j, sign, ib)
        out.append(EdgeBit(f, x, y, sign, 0.0, b - ib))
    return out


def split_leg(leg: Leg, s) -> tuple[list[Leg], list[Leg]]:
    """Legs covering [0, s] and [s, end] of a leg, in travel order."""
    s = _as_int(s)
    if isinstance(leg, FlatLeg):
        p = leg.point(s)
        head = [FlatLeg(leg.flat, leg.entry, p.coords)] if s > 0 else []
        if leg.unbounded:
            ux, uy = leg._dir()
            return head, [FlatLeg(leg.flat, p.coords, (p.x + ux, p.y + uy), True)]
        tail = [FlatLeg(leg.flat, p.coords, leg.exit)] if s < leg.length else []
        return head, tail
    if isinstance(leg, EdgeBit):
        u = leg.s0 + (s if leg.s1 >= leg.s0 else -s)
        head = [EdgeBit(leg.flat, leg.i, leg.j, leg.sign, leg.s0, u)] if s > 0 else []
        tail = [EdgeBit(leg.flat, leg.i, leg.j, leg.sign, u, leg.s1)] if u != leg.s1 else []
        return head, tail
    args = (leg.flat, leg.i, leg.j, leg.sign)
    if not leg.upward:
        return _run_pieces(*args, 0, s), _run_pieces(*args, s, leg.count)
    cut = leg.count - s
    head = [_reverse(p) for p in reversed(_run_pieces(*args, cut, leg.count))]
    tail = [_reverse(p) for p in reversed(_run_pieces(*args, 0, cut))]
    return head, tail


def _norm_crossing(leg: Leg, r: float):
    """First offset along the leg where the norm reaches r (norm is convex along a leg)."""
    if isinstance(leg, EdgeLeg):
        lo, hi = 0, int(leg.count) if leg.count != math.inf else None
        if hi is None:
            hi = 1
            while norm(leg.point(hi)) < r:
                hi *= 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if norm(leg.point(mid)) < r:
                lo = mid
            else:
                hi = mid
        frac = min(max(r - norm(leg.point(lo)), 0.0), 1.0)
        return lo + frac if frac < 1 else hi
    lo, hi = 0.0, leg.length
    if hi == math.inf:
        hi = 1.0
        while norm(leg.point(hi)) < r:
            hi *= 2
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if norm(leg.point(mid)) < r:
            lo = mid
        else:
            hi = mid
    return hi


# ---------------------------------------------------------------- rays


class Projection(NamedTuple):
    t: float
    d: float
    truncated: bool


class ItineraryRay:
    """A geodesic ray from the basepoint built lazily from moves."""

    def __init__(self, moves: Iterable[Move], name: str = "ray"):
        self.name = name
        self._source: Iterator[Move] | None = iter(moves)
        self._legs: list[Leg] = []
        self._starts: list = []
        self._exact: list[tuple[int, float]] = []
        self._end = (0, 0.0)
        self._flat = Y0
        self._pos = (0, 0)
        self._last = None
        self._lock = threading.Lock()
        self.stages: list = []

    # -- production

    def _pull(self) -> bool:
        if self._source is None:
            return False
        mv = next(self._source, None)
        if mv is None:
            self._source = None
            return False
        kind = mv[0]
        if kind == self._last and kind in ("flat", "edge"):
            raise ValueError(f"{self.name}: consecutive {kind} moves are not in normal form")
        if kind == "flat":
            _, i, j = mv
            if (i, j) == (0, 0):
                raise ValueError(f"{self.name}: empty flat move")
            leg: Leg = FlatLeg(self._flat, (0.0, 0.0), (float(i), float(j)))
            self._pos = (int(i), int(j))
        elif kind == "edge":
            _, sign, count = mv
            if count != math.inf:
                count = int(count)
            if count < 1:
                raise ValueError(f"{self.name}: edge run needs a positive count")
            leg = EdgeLeg(self._flat, self._pos[0], self._pos[1], sign, count)
            if count != math.inf:
                self._flat = self._flat.child(self._pos[0], self._pos[1], sign, count)
            self._pos = (0, 0)
        elif kind == "dir":
            _, dx, dy = mv
            if dx == 0 and dy == 0:
                raise ValueError(f"{self.name}: zero direction")
            leg = FlatLeg(self._flat, (0.0, 0.0), (float(dx), float(dy)), unbounded=True)
        else:
            raise ValueError(f"{self.name}: unknown move {mv!r}")
        self._last = kind
        n, f = self._end
        self._legs.append(leg)
        self._exact.append(self._end)
        self._starts.append(n + f if f else n)
        dn, df = _length_parts(leg)
        self._end = (n + dn, f + df) if leg.length != math.inf else (n, math.inf)
        if leg.length == math.inf:
            self._source = None
        return True

    def _ensure_legs(self, k: int) -> bool:
        if len(self._legs) >= k:
            return True
        with self._lock:
            while len(self._legs) < k:
                if not self._pull():
                    return False
        return True

    def _ensure_time(self, t) -> None:
        with self._lock:
            while sum(self._end) <= t and self._pull():
                pass

    def legs(self, T=math.inf) -> list[Leg]:
        """Legs starting before T."""
        self._ensure_time(T)
        k = bisect.bisect_left(self._starts, T)
        return list(self._legs[:k])

    def leg_starts(self, T=math.inf) -> list:
        self._ensure_time(T)
        k = bisect.bisect_left(self._starts, T)
        return list(self._starts[:k])

    def locate(self, t) -> tuple[int, float]:
        if t < 0:
            raise ValueError("ray parameter must be non-negative")
        self._ensure_time(t)
        k = max(0, bisect.bisect_right(self._starts, t) - 1)
        if k >= len(self._legs):
            raise ValueError(f"{self.name}: ray ends before {t}")
        n, f = self._exact[k]
        if isinstance(t, int) and f == 0:
            off = t - n
        else:
            off = t - self._starts[k]
        leg = self._legs[k]
        if off > leg.length:
            raise ValueError(f"{self.name}: ray ends before {t}")
        return k, _as_int(off)

    def point(self, t) -> Point:
        k, off = self.locate(t)
        return self._legs[k].point(off)

    def legs_from(self, t) -> Iterator[Leg]:
        """The ray beyond parameter t as a lazy leg sequence."""
        k, off = self.locate(t)
        yield from split_leg(self._legs[k], off)[1]
        k += 1
        while self._ensure_legs(k + 1):
            yield self._legs[k]
            k += 1

    # -- analysis

    def flat_segments(self, T) -> list[tuple[float, float, FlatAddress]]:
        """Maximal parameter intervals inside one flat, truncated at T."""
        out = []
        for s0, leg in zip(self.leg_starts(T), self.legs(T)):
            if isinstance(leg, FlatLeg):
                out.append((s0, min(s0 + leg.length, T), leg.flat))
        return out

    def project(self, z: Point, T=None) -> Projection:
        """Closest point of ray|_T to z; ties go to the smaller parameter.

        Distance to a geodesic is convex along it, so the scan stops at the first
        leg whose minimum is not at its far end.
        """
        best_t, best_d = 0.0, math.inf
        k = 0
        while self._ensure_legs(k + 1):
            leg, s0 = self._legs[k], self._starts[k]
            if T is not None and s0 >= T:
                break
            s, d = leg.nearest(z)
            at_end = s >= leg.length - TOL
            if T is not None and s0 + s > T:
                s = T - s0
                d = distance(z, leg.point(s))
                at_end = False
            if d < best_d - 1e-12:
                best_t, best_d = s0 + s, d
            if not at_end:
                break
            k += 1
        truncated = T is not None and best_t >= T - TOL
        return Projection(best_t, best_d, truncated)

    def traverses(self, vertex: Vertex, sign: int, T=math.inf) -> bool:
        """Whether ray|_T crosses the whole sign-edge hanging below vertex."""
        for s0, leg in zip(self.leg_starts(T), self.legs(T)):
            if not isinstance(leg, EdgeLeg) or leg.sign != sign:
                continue
            if (leg.flat, leg.i, leg.j) == (vertex.flat, vertex.i, vertex.j):
                m = 0
            elif (vertex.i, vertex.j) == (0, 0) and vertex.flat.depth > leg.flat.depth:
                m = vertex.flat.depth - leg.flat.depth
                if m >= leg.count or leg.bottom(m) != vertex.flat:
                    continue
            else:
                continue
            if s0 + m + 1 <= T:
                return True
        return False

    def __repr__(self) -> str:
        return f"ItineraryRay({self.name!r})"


def straight_ray(dx: float = 1.0, dy: float = 0.0) -> ItineraryRay:
    return ItineraryRay([("dir", dx, dy)], name=f"straight({dx},{dy})")


def g3_ray(sign: int = 1) -> ItineraryRay:
    return ItineraryRay([("edge", sign, math.inf)], name="g3" if sign > 0 else "G3")


def exit_ray(i: int, j: int = 0, sign: int = 1) -> ItineraryRay:
    """Leave the base flat at (i, j) and then follow g3 edges forever."""
    moves = [("flat", i, j)] if (i, j) != (0, 0) else []
    return ItineraryRay(moves + [("edge", sign, math.inf)], name=f"exit({i},{j})")


@dataclass(frozen=True)
class WitnessStage:
    i: int
    horizontal: int
    vertical: int
    total: int


def witness_start(kappa: SublinearFn) -> int:
    """Least i with 2^i >= kappa(2^i)."""
    i = 0
    while 2 ** i < kappa(2 ** i):
        i += 1
    return i


def witness_ray(kappa: SublinearFn, i_max: int) -> ItineraryRay:
    """Ray alternating a horizontal run floor(kappa(2^i)) in a fresh flat with a g3 run.

    The opening g3 run has length 2^(i0+1), so the ray has covered exactly
    2^(i+1) after stage i; after stage i_max it follows g3 edges forever.
    """
    i0 = witness_start(kappa)
    if i_max < i0:
        raise ValueError(f"i_max={i_max} is below the first admissible stage {i0}")
    stages = [WitnessStage(i0, 0, 2 ** (i0 + 1), 2 ** (i0 + 1))]
    moves: list[Move] = [("edge", 1, 2 ** (i0 + 1) if i_max > i0 else math.inf)]
    for i in range(i0 + 1, i_max + 1):
        h = math.floor(kappa(2 ** i))
        v = 2 ** i - h
        if v < 1:
            raise ValueError(f"stage {i} has no vertical run; kappa is too large there")
        stages.append(WitnessStage(i, h, v, stages[-1].total + h + v))
        moves.append(("flat", h, 0))
        moves.append(("edge", 1, v if i < i_max else math.inf))
    ray = ItineraryRay(moves, name=f"witness({kappa.name},{i_max})")
    ray.stages = stages
    return ray


def random_itinerary(seed, kappa: SublinearFn, n_stages: int, bound: float = 2.0,
                     spikes: int = 0, spike_factor: float = 12.0, max_run: int = 4) -> ItineraryRay:
    """Random ray whose flat segments have length <= bound*kappa(t1).

    With spikes > 0 that many stages instead get a segment of about
    spike_factor*bound*kappa(t1), placed at growing parameters.
    """
    rng = np.random.default_rng(seed)
    spike_at = set()
    if spikes:
        spike_at = set(int(k) for k in np.linspace(n_stages // 3, n_stages - 1, spikes))
    moves: list[Move] = []
    t = 0.0
    first = int(rng.integers(1, max_run + 1))
    moves.append(("edge", 1, first))
    t += first
    for k in range(n_stages):
        cap = bound * kappa(t)
        if k in spike_at:
            target = spike_factor * cap * (1 + rng.random())
        else:
            target = max(1.0, cap * rng.uniform(0.3, 1.0))
        while True:
            th = rng.uniform(0, 2 * math.pi)
            i, j = round(target * math.cos(th)), round(target * math.sin(th))
            L = math.hypot(i, j)
            if (i, j) != (0, 0) and (k in spike_at or L <= cap):
                break
            target = max(1.0, target * 0.9)
        moves.append(("flat", i, j))
        t += L
        run = int(rng.integers(1, max_run + 1))
        sign = 1 if rng.random() < 0.5 else -1
        moves.append(("edge", sign, run if k < n_stages - 1 else math.inf))
        t += run
    tag = f"spiky{spikes}" if spikes else "bounded"
    return ItineraryRay(moves, name=f"random({tag},{seed})")


# ---------------------------------------------------------------- contraction


@dataclass
class ContractionReport:
    horizon: float
    kappa: str
    rows: list[tuple[float, float, float]]
    c: float | None = None

    @property
    def sup(self) -> float:
        return max((r[2] for r in self.rows), default=0.0)

    @property
    def verdict(self) -> bool | None:
        return None if self.c is None else self.sup <= self.c

    def to_csv(self) -> str:
        lines = ["t1,t2,ratio"]
        lines += [f"{t1!r},{t2!r},{ratio!r}" for t1, t2, ratio in self.rows]
        return "\n".join(lines) + "\n"


def contraction_ratio(ray: ItineraryRay, kappa: SublinearFn, T, c: float | None = None) -> ContractionReport:
    """Rows (t1, t2, (t2 - t1)/kappa(t1)) over the flat segments of ray|_T."""
    rows = [(float(t1), float(t2), (t2 - t1) / kappa(t1)) for t1, t2, _ in ray.flat_segments(T)]
    return ContractionReport(float(T), kappa.name, rows, c)


def witness_transfer(kappa: SublinearFn, c: float) -> float:
    """Segment constant implied by ball-projection constant c.

    A witness ball gives t2 - t1 <= c*kappa(t2), and with |t2 - t1| <= c*kappa(t2)
    the distortion bound D1*kappa(t2) <= kappa(t1) yields t2 - t1 <= (c/D1)*kappa(t1).
    """
    if c <= 0:
        return 0.0
    d1, _ = distortion_constants(kappa, c)
    return c / d1


def project_point_to_ray(x: Point, ray: ItineraryRay, T=None) -> Projection:
    return ray.project(x, T)


def ball_projection_diameter(ray: ItineraryRay, x: Point, R: float, n_samples: int,
                             T=None, seed=None) -> float:
    """Lower bound on the diameter of the projection of B(x, R) to the ray."""
    gap = ray.project(x, T).d
    if R > gap + TOL:
        raise ValueError(f"ball radius {R} exceeds the distance {gap} to the ray")
    pts = [x] + sample_ball(x, R, n_samples, seed=seed)
    ts = [ray.project(p, T).t for p in pts]
    return max(ts) - min(ts)


def witness_ball(ray: ItineraryRay, t1, t2) -> tuple[FlatPoint, float]:
    """Ball sitting perpendicular to b[t1, t2] at b(t1), of radius t2 - t1."""
    k, _ = ray.locate((t1 + t2) / 2)
    leg, s0 = ray._legs[k], ray._starts[k]
    if not isinstance(leg, FlatLeg) or t1 < s0 - TOL or t2 > s0 + leg.length + TOL:
        raise ValueError("b[t1, t2] is not inside a single flat")
    a = leg.point(min(max(t1 - s0, 0.0), leg.length))
    b = leg.point(min(max(t2 - s0, 0.0), leg.length))
    L = float(t2 - t1)
    ux, uy = (b.x - a.x) / L, (b.y - a.y) / L
    return FlatPoint(a.flat, a.x - uy * L, a.y + ux * L), L


def witness_ball_diameter(ray: ItineraryRay, t1, t2) -> tuple[float, float]:
    """(projection diameter, norm of centre) for the witness ball of b[t1, t2]."""
    c, L = witness_ball(ray, t1, t2)
    k, _ = ray.locate((t1 + t2) / 2)
    a = ray._legs[k].point(max(t1 - ray._starts[k], 0.0))
    ux, uy = (c.y - a.y) / L, -(c.x - a.x) / L
    rim = [c, FlatPoint(c.flat, c.x + ux * L, c.y + uy * L), FlatPoint(c.flat, c.x - ux * L, c.y - uy * L), a]
    ts = [ray.project(p).t for p in rim]
    return max(ts) - min(ts), norm(c)


# ---------------------------------------------------------------- paths


@dataclass
class Sample:
    point: Point
    arc: tuple[int, float]
    leg: int
    offset: float


def _arc_add(a: tuple[int, float], leg: Leg, s) -> tuple[int, float]:
    if isinstance(leg, EdgeLeg) and isinstance(s, int):
        return a[0] + s, a[1]
    n = _int_length(leg)
    if n is not None and s == leg.length:
        return a[0] + n, a[1]
    return a[0], a[1] + float(s)


class PiecewisePath:
    """A continuous path made of geodesic legs, optionally continuing along a ray."""

    def __init__(self, legs: Iterable[Leg], start: Point = BASEPOINT,
                 tail: ItineraryRay | None = None, tail_from=0):
        self.legs = [leg for leg in legs if leg.length > 0]
        self.start = start
        self.tail = tail
        self.tail_from = tail_from

    @classmethod
    def through(cls, points: list[Point]) -> "PiecewisePath":
        legs: list[Leg] = []
        for a, b in zip(points, points[1:]):
            legs += geodesic_legs(a, b)
        return cls(legs, start=points[0])

    @classmethod
    def from_ray(cls, ray: ItineraryRay) -> "PiecewisePath":
        return cls([], start=BASEPOINT, tail=ray, tail_from=0)

    @property
    def finite(self) -> bool:
        return self.tail is None

    def iter_legs(self) -> Iterator[Leg]:
        yield from self.legs
        if self.tail is not None:
            yield from self.tail.legs_from(self.tail_from)

    @property
    def length(self) -> float:
        if self.tail is not None:
            return math.inf
        return math.fsum(leg.length for leg in self.legs)

    def point(self, s) -> Point:
        if s < 0:
            raise ValueError("path parameter must be non-negative")
        acc = 0
        last = self.start
        for leg in self.iter_legs():
            if s <= acc + leg.length:
                return leg.point(s - acc)
            acc += leg.length
            last = leg.end
        if s - acc > TOL:
            raise ValueError(f"parameter {s} beyond path length {acc}")
        return last

    def _capped(self, max_norm: float | None, max_arc: float | None) -> list:
        """(index, leg, arc at leg start, offset where sampling stops) up to the caps."""
        if self.tail is not None and max_norm is None and max_arc is None:
            raise ValueError("an infinite path needs a norm or arc cap")
        out = []
        if max_norm is not None and norm(self.start) >= max_norm:
            return out
        arc = (0, 0.0)
        for k, leg in enumerate(self.iter_legs()):
            stop, done = leg.length, False
            if max_norm is not None and (stop == math.inf or norm(leg.end) >= max_norm):
                stop, done = _norm_crossing(leg, max_norm), True
            if max_arc is not None:
                room = max_arc - (arc[0] + arc[1])
                if room <= stop:
                    stop, done = _as_int(room), True
            if stop == math.inf:
                raise ValueError("cannot sample an unbounded leg without a cap")
            if isinstance(leg, EdgeLeg):
                stop = _as_int(stop)
            out.append((k, leg, arc, stop))
            if done:
                break
            n = _int_length(leg)
            arc = _arc_add(arc, leg, n if n is not None else leg.length)
        return out

    def samples(self, max_norm: float | None = None, max_arc: float | None = None,
                per_leg: int = 4) -> list[Sample]:
        """Start, leg ends and per_leg interior points per leg, up to a norm or arc cap."""
        out = [Sample(self.start, (0, 0.0), -1, 0)]
        for k, leg, arc, stop in self._capped(max_norm, max_arc):
            for s in _offsets(leg, stop, per_leg):
                out.append(Sample(leg.point(s), _arc_add(arc, leg, s), k, s))
        return out

    def random_samples(self, count: int, rng, max_norm: float | None = None,
                       max_arc: float | None = None) -> list[Sample]:
        """Points at uniformly random arc positions of the capped path."""
        cap = [c for c in self._capped(max_norm, max_arc) if c[3] > 0]
        if not cap or count <= 0:
            return []
        cdf = np.cumsum([float(c[3]) for c in cap])
        out = []
        for _ in range(count):
            idx = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(cap) - 1)
            k, leg, arc, stop = cap[idx]
            if isinstance(leg, EdgeLeg) and isinstance(stop, int):
                s = int(rng.random() * stop)
            else:
                s = rng.random() * stop
            out.append(Sample(leg.point(s), _arc_add(arc, leg, s), k, s))
        return out

    def _legs_upto(self, k: int) -> Iterator[Leg]:
        for n, leg in enumerate(self.iter_legs()):
            if n > k:
                return
            yield leg

    def leg_at(self, k: int) -> Leg:
        return list(self._legs_upto(k))[k]

    def nearest(self, z: Point, max_norm: float | None = None) -> tuple[int, float, float]:
        """(leg index, offset, distance) of the closest path point; earliest on ties."""
        best = (-1, 0.0, distance(z, self.start))
        for k, leg in enumerate(self.iter_legs()):
            if max_norm is not None and norm(leg.start) > max_norm:
                break
            s, d = leg.nearest(z)
            if d < best[2] - 1e-12:
                best = (k, s, d)
            if leg.length == math.inf:
                break
        return best

    def head(self, k: int, s) -> list[Leg]:
        """Legs of the path up to offset s of leg k."""
        if k < 0:
            return []
        legs = list(self._legs_upto(k))
        return legs[:k] + split_leg(legs[k], s)[0]

    def quasi_excess(self, q: int, max_norm: float | None = None, max_arc: float | None = None,
                     pairs: int = 1000, seed=0, per_leg: int = 4) -> float:
        """Sampled max of |s - t|/q - d(p(s), p(t)): the additive constant at multiplier q.

        Arc lengths and distances are split into whole edges and a remainder, so
        the comparison stays exact along very long g3 runs.
        """
        best = 0.0
        for a, b in self._measure_pairs(max_norm, max_arc, pairs, seed, per_leg):
            dn, df = b.arc[0] - a.arc[0], b.arc[1] - a.arc[1]
            if dn + df < 0:
                dn, df = -dn, -df
            en, ef = distance_parts(a.point, b.point)
            best = max(best, ((dn - q * en) + (df - q * ef)) / q)
        return best

    def measured_q(self, Q: float = 0.0, max_norm: float | None = None, max_arc: float | None = None,
                   pairs: int = 1000, seed=0, per_leg: int = 4) -> float:
        """Sampled max of |s - t| / (d + Q), at least 1."""
        best = 1.0
        for a, b in self._measure_pairs(max_norm, max_arc, pairs, seed, per_leg):
            arc = abs((b.arc[0] - a.arc[0]) + (b.arc[1] - a.arc[1]))
            if arc <= TOL:
                continue
            d = distance(a.point, b.point) + Q
            if d <= 0:
                return math.inf
            best = max(best, arc / d)
        return best

    def measured_constants(self, ladder=(1, 3, 9), **kw) -> list[tuple[int, float]]:
        """(q, Q) pairs, one per multiplier q in the ladder."""
        return [(q, self.quasi_excess(q, **kw)) for q in ladder]

    def _measure_pairs(self, max_norm, max_arc, pairs, seed, per_leg, max_struct: int = 120):
        struct = self.samples(max_norm=max_norm, max_arc=max_arc, per_leg=per_leg)
        if len(struct) > max_struct:
            keep = sorted(set(np.linspace(0, len(struct) - 1, max_struct).round().astype(int)))
            struct = [struct[i] for i in keep]
        for a in range(len(struct)):
            for b in range(a + 1, len(struct)):
                yield struct[a], struct[b]
        if pairs:
            rng = np.random.default_rng(seed)
            rand = self.random_samples(2 * pairs, rng, max_norm=max_norm, max_arc=max_arc)
            yield from zip(rand[::2], rand[1::2])


def _offsets(leg: Leg, stop, per_leg: int) -> list:
    if stop == math.inf:
        raise ValueError("cannot sample an unbounded leg without a cap")
    if isinstance(leg, EdgeLeg):
        stop = _as_int(stop)
        if isinstance(stop, int):
            inner = sorted({(stop * k) // (per_leg + 1) for k in range(1, per_leg + 1)} - {0, stop})
            return inner + [stop]
        whole = math.floor(stop)
        inner = sorted({(whole * k) // (per_leg + 1) for k in range(1, per_leg + 1)} - {0})
        return inner + [stop]
    return [stop * k / (per_leg + 1) for k in range(1, per_leg + 1)] + [stop]


def neighborhood_excess(path: PiecewisePath, ray: ItineraryRay, m: float, kappa: SublinearFn,
                        T: float, per_leg: int = 8) -> float:
    """max over path|_T of d(p, ray)/kappa(|p|) - m; at most 0 means inside N(ray, m)."""
    worst = -math.inf
    for smp in path.samples(max_norm=T, per_leg=per_leg):
        d = ray.project(smp.point).d
        worst = max(worst, d / kappa(norm(smp.point)))
    return worst - m


def concat_quasi_geodesic(x: Point, path: PiecewisePath, z_start: bool = True) -> PiecewisePath:
    """[x, y] followed by the part of path from y back to its start (or on to its end).

    y is the closest point of the path to x.
    """
    if path.tail is not None and not z_start:
        raise ValueError("cannot run to the end of an infinite path")
    k, s, _ = path.nearest(x)
    if k < 0:
        y = path.start
    else:
        y = path.leg_at(k).point(s)
    head = geodesic_legs(x, y)
    if z_start:
        back = [_reverse(leg) for leg in reversed(path.head(k, s))]
        return PiecewisePath(head + back, start=x)
    legs = path.legs
    rest = legs[k + 1:] if k >= 0 else legs
    if k >= 0:
        rest = split_leg(legs[k], s)[1] + rest
    return PiecewisePath(head + rest, start=x)


def surgery(gamma: PiecewisePath, b: ItineraryRay, r: float) -> PiecewisePath:
    """Reroute gamma onto the ray b, keeping gamma up to norm r/2.

    q is the closest point of gamma to b(r), R bounds the norm along gamma up
    to q, q' is the closest point of that stretch to b(R); the result is
    gamma up to q', then [q', b(R)], then b beyond R.
    """
    br = b.point(r)
    k, s, dq = gamma.nearest(br, max_norm=1.5 * r + 1)
    if dq > r / 2 + TOL:
        raise ValueError(f"surgery-gap: d(b_r, gamma) = {dq} exceeds r/2 = {r / 2}")
    head = gamma.head(k, s)
    R = max([norm(gamma.start)] + [norm(leg.end) for leg in head] + [r])
    bR = b.point(R)
    stretch = PiecewisePath(head, start=gamma.start)
    k2, s2, _ = stretch.nearest(bR)
    keep = stretch.head(k2, s2)
    qp = keep[-1].end if keep else gamma.start
    return PiecewisePath(keep + geodesic_legs(qp, bR), start=gamma.start, tail=b, tail_from=R)


def spur_path(ray: ItineraryRay, t, length: float, direction: tuple[float, float] = (0.0, 1.0)) -> PiecewisePath:
    """The ray with an out-and-back detour of the given length at parameter t.

    The detour runs inside the flat containing ray(t) (or along a g3-edge
    when ray(t) is not in a flat segment), away from the ray.
    """
    p = ray.point(t)
    if not isinstance(p, FlatPoint):
        raise ValueError("spur base must be a point of a flat")
    dx, dy = direction
    n = math.hypot(dx, dy)
    far = FlatPoint(p.flat, p.x + dx / n * length, p.y + dy / n * length)
    legs = ray.legs(t)
    starts = ray.leg_starts(t)
    head: list[Leg] = []
    if legs:
        head = legs[:-1] + split_leg(legs[-1], _as_int(t - starts[-1]))[0]
    out_back = geodesic_legs(p, far) + geodesic_legs(far, p)
    return PiecewisePath(head + out_back, start=BASEPOINT, tail=ray, tail_from=t)


# ---------------------------------------------------------------- ray files


_COORD = r"\(?\s*(-?[\d.eE+-]+)\s*,\s*(-?[\d.eE+-]+)\s*\)?"
_FLAT_LINE = re.compile(r"flat\s+" + _COORD + r"\s*->\s*" + _COORD)
_EDGE_LINE = re.compile(r"edge\s+([+-])(?:\s*\^?\s*(\d+))?")


def parse_ray(text: str, name: str = "ray") -> ItineraryRay:
    """Read a ray description: one `flat i,j -> k,l` or `edge +|-` per line.

    The last line continues forever: a flat line straight on, an edge line as
    an endless g3 run of that sign.
    """
    moves: list[list] = []
    pos = (0.0, 0.0)
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _FLAT_LINE.fullmatch(line)
        if m:
            a = (float(m.group(1)), float(m.group(2)))
            b = (float(m.group(3)), float(m.group(4)))
            if a != pos:
                raise ValueError(f"line {n}: flat leg starts at {a}, expected {pos}")
            if a == b:
                raise ValueError(f"line {n}: empty flat leg")
            if moves and moves[-1][0] == "flat":
                prev = moves[-1]
                cross = prev[1] * (b[1] - a[1]) - prev[2] * (b[0] - a[0])
                dot = prev[1] * (b[0] - a[0]) + prev[2] * (b[1] - a[1])
                if abs(cross) > 1e-12 or dot <= 0:
                    raise ValueError(f"line {n}: bend inside a flat is not geodesic")
                moves[-1] = ["flat", b[0], b[1]]
            else:
                moves.append(["flat", b[0], b[1]])
            pos = b
            continue
        m = _EDGE_LINE.fullmatch(line)
        if m:
            sign = 1 if m.group(1) == "+" else -1
            count = int(m.group(2)) if m.group(2) else 1
            if moves and moves[-1][0] == "flat" and not (pos[0].is_integer() and pos[1].is_integer()):
                raise ValueError(f"line {n}: edges attach at lattice points, not {pos}")
            if moves and moves[-1][0] == "edge":
                if moves[-1][1] != sign:
                    raise ValueError(f"line {n}: edge backtracks the previous one")
                moves[-1][2] += count
            else:
                moves.append(["edge", sign, count])
            pos = (0.0, 0.0)
            continue
        raise ValueError(f"line {n}: cannot parse {line!r}")
    if not moves:
        raise ValueError("empty ray description")
    last = moves[-1]
    if last[0] == "flat":
        last[0] = "dir"
    else:
        last[2] = math.inf
    out = []
    for mv in moves:
        if mv[0] == "flat":
            if not (float(mv[1]).is_integer() and float(mv[2]).is_integer()):
                raise ValueError("interior flat legs must end at lattice points")
            out.append(("flat", int(mv[1]), int(mv[2])))
        else:
            out.append(tuple(mv))
    return ItineraryRay(out, name=name)


def format_ray(ray: ItineraryRay, max_legs: int = 10_000) -> str:
    """Ray description text; the final line carries the tail."""
    lines = []
    k = 0
    while k < max_legs and ray._ensure_legs(k + 1):
        leg = ray._legs[k]
        if isinstance(leg, FlatLeg):
            ex, ey = leg.exit
            lines.append(f"flat 0,0 -> {_num(ex)},{_num(ey)}")
        else:
            sg = "+" if leg.sign > 0 else "-"
            lines.append(f"edge {sg}" if leg.count == math.inf else f"edge {sg} {int(leg.count)}")
        if leg.length == math.inf:
            return "\n".join(lines) + "\n"
        k += 1
    raise ValueError(f"ray has no tail within {max_legs} legs")


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))
