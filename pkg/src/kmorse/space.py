"""Exact geometry of the tree of flats for Z^2 * Z.

Flats are cosets of the Z^2 factor; unit g3-edges join every lattice point v to
v*g3 and v*g3^-1.  A flat is addressed by the free-product normal form of its
coset, stored as syllables (i, j, k): move by (i, j) inside the current flat,
then cross k edges labelled g3 (k != 0, sign gives the direction).  Only the
first syllable may have (i, j) == (0, 0).
"""
from __future__ import annotations

import heapq
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Union

import numpy as np

Syllable = tuple[int, int, int]

TOL = 1e-9


def _sign(k: float) -> int:
    return 1 if k > 0 else -1


@dataclass(frozen=True)
class FlatAddress:
    syllables: tuple[Syllable, ...] = ()
    depth: int = field(default=0, init=False, compare=False, repr=False)

    def __post_init__(self):
        for n, (i, j, k) in enumerate(self.syllables):
            if k == 0:
                raise ValueError("syllable with zero g3 exponent")
            if n > 0 and i == 0 and j == 0:
                raise ValueError("zero displacement between g3 runs is not in normal form")
        object.__setattr__(self, "depth", sum(abs(s[2]) for s in self.syllables))

    @property
    def last_sign(self) -> int:
        return _sign(self.syllables[-1][2]) if self.syllables else 0

    def child(self, i: int, j: int, sign: int, count: int = 1) -> "FlatAddress":
        """Flat reached by crossing `count` sign-edges downward from (i, j)."""
        syl = self.syllables
        if i == 0 and j == 0 and syl:
            if syl[-1][2] * sign < 0:
                raise ValueError("that edge leads back to the parent flat")
            a, b, k = syl[-1]
            return FlatAddress(syl[:-1] + ((a, b, k + sign * count),))
        return FlatAddress(syl + ((i, j, sign * count),))

    def leads_up(self, i: int, j: int, sign: int) -> bool:
        return i == 0 and j == 0 and bool(self.syllables) and self.syllables[-1][2] * sign < 0

    def parent(self) -> tuple["FlatAddress", tuple[int, int]]:
        """Parent flat and the lattice point there carrying the edge into this flat."""
        if not self.syllables:
            raise ValueError("the base flat has no parent")
        a, b, k = self.syllables[-1]
        if abs(k) > 1:
            return FlatAddress(self.syllables[:-1] + ((a, b, k - _sign(k)),)), (0, 0)
        return FlatAddress(self.syllables[:-1]), (a, b)

    def across(self, i: int, j: int, sign: int) -> tuple["FlatAddress", tuple[int, int]]:
        """Flat and local lattice point on the far side of the sign-edge at (i, j)."""
        if self.leads_up(i, j, sign):
            return self.parent()
        return self.child(i, j, sign), (0, 0)

    def block(self, n: int) -> tuple[int, int, int]:
        """The n-th single-edge block (1-based) as (i, j, sign)."""
        if not 1 <= n <= self.depth:
            raise IndexError(n)
        for i, j, k in self.syllables:
            if n <= abs(k):
                return (i, j, _sign(k)) if n == 1 else (0, 0, _sign(k))
            n -= abs(k)
        raise AssertionError

    def blocks(self) -> Iterator[tuple[int, int, int]]:
        for i, j, k in self.syllables:
            s = _sign(k)
            yield (i, j, s)
            for _ in range(abs(k) - 1):
                yield (0, 0, s)

    def prefix(self, depth: int) -> "FlatAddress":
        if depth >= self.depth:
            return self
        out, left = [], depth
        for i, j, k in self.syllables:
            if left <= 0:
                break
            take = min(left, abs(k))
            out.append((i, j, _sign(k) * take))
            left -= take
        return FlatAddress(tuple(out))

    def is_prefix_of(self, other: "FlatAddress") -> bool:
        return common_prefix(self, other)[0] == self.depth

    def __str__(self) -> str:
        parts = ["Y0"]
        for i, j, k in self.syllables:
            tok = f"({i},{j}){'+' if k > 0 else '-'}"
            if abs(k) > 1:
                tok += f"^{abs(k)}"
            parts.append(tok)
        return "/".join(parts)


Y0 = FlatAddress()


def common_prefix(a: FlatAddress, b: FlatAddress) -> tuple[int, int, int]:
    """(depth, i, r): shared depth, index of first unshared syllable, blocks of it shared."""
    d = 0
    sa, sb = a.syllables, b.syllables
    n = min(len(sa), len(sb))
    i = 0
    while i < n:
        x, y = sa[i], sb[i]
        if x == y:
            d += abs(x[2])
            i += 1
            continue
        if x[0] == y[0] and x[1] == y[1] and x[2] * y[2] > 0:
            r = min(abs(x[2]), abs(y[2]))
            return d + r, i, r
        return d, i, 0
    return d, i, 0


def _climb(addr: FlatAddress, i: int, r: int, px: float, py: float) -> tuple[int, float, float, float]:
    """Cost of climbing from (px, py) in addr to the shared flat, and the arrival point.

    The cost comes back split as (edges, planar) so deep runs stay exact.
    """
    syl = addr.syllables
    if i < len(syl) and r == abs(syl[i][2]):
        i, r = i + 1, 0
    if i >= len(syl):
        return 0, 0.0, px, py
    edges = -r
    heads = 0.0
    for n in range(i, len(syl)):
        a, b, k = syl[n]
        edges += abs(k)
        if n > i:
            heads += math.hypot(a, b)
    planar = math.hypot(px, py) + heads
    if r == 0:
        return edges, planar, float(syl[i][0]), float(syl[i][1])
    return edges, planar, 0.0, 0.0


@dataclass(frozen=True)
class FlatPoint:
    flat: FlatAddress
    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x) + 0.0)
        object.__setattr__(self, "y", float(self.y) + 0.0)

    @property
    def coords(self) -> tuple[float, float]:
        return (self.x, self.y)

    @property
    def is_vertex(self) -> bool:
        return self.x.is_integer() and self.y.is_integer()

    def __str__(self) -> str:
        return f"pt:{self.flat}:({_fmt(self.x)},{_fmt(self.y)})"


@dataclass(frozen=True)
class EdgePoint:
    """Interior point of the edge from parent-side vertex (flat, i, j) with the given sign."""
    flat: FlatAddress
    i: int
    j: int
    sign: int
    s: float

    def __post_init__(self):
        if not 0 < self.s < 1:
            raise ValueError("edge parameter must lie strictly inside (0, 1)")
        if self.flat.leads_up(self.i, self.j, self.sign):
            raise ValueError("edge point not in canonical parent-side form")

    @property
    def child(self) -> FlatAddress:
        return self.flat.child(self.i, self.j, self.sign)

    @property
    def key(self) -> tuple:
        return (self.flat, self.i, self.j, self.sign)

    def __str__(self) -> str:
        sg = "+" if self.sign > 0 else "-"
        return f"edge:{self.flat}:({self.i},{self.j}):{sg}:{_fmt(self.s)}"


Point = Union[FlatPoint, EdgePoint]


@dataclass(frozen=True)
class Vertex:
    flat: FlatAddress
    i: int
    j: int

    @property
    def point(self) -> FlatPoint:
        return FlatPoint(self.flat, self.i, self.j)

    def __str__(self) -> str:
        return f"{self.flat}:({self.i},{self.j})"


BASEPOINT = FlatPoint(Y0, 0.0, 0.0)


def edge_point(flat: FlatAddress, i: int, j: int, sign: int, s: float) -> Point:
    """Point at distance s from vertex (flat, i, j) along its sign-edge, canonicalized."""
    if flat.leads_up(i, j, sign):
        parent, (a, b) = flat.parent()
        flat, i, j, sign, s = parent, a, b, flat.last_sign, 1.0 - s
    if s <= 0:
        return FlatPoint(flat, i, j)
    if s >= 1:
        return FlatPoint(flat.child(i, j, sign), 0, 0)
    return EdgePoint(flat, i, j, sign, s)


def _ends(e: EdgePoint) -> tuple[FlatPoint, FlatPoint]:
    return FlatPoint(e.flat, e.i, e.j), FlatPoint(e.child, 0, 0)


def _key(p: Point) -> FlatAddress:
    return p.flat if isinstance(p, FlatPoint) else p.child


def _below(e: EdgePoint, p: Point) -> bool:
    """Whether p lies on the child side of edge e (p not on e)."""
    return e.child.is_prefix_of(p.flat)


def _toward(e: EdgePoint, p: Point) -> tuple[FlatPoint, float, float]:
    """Endpoint of e facing p, the distance to it, and its edge parameter."""
    lo, hi = _ends(e)
    if _below(e, p):
        return hi, 1.0 - e.s, 1.0
    return lo, e.s, 0.0


def distance_parts(x: Point, y: Point) -> tuple[int, float]:
    """distance(x, y) as (whole edges crossed, remaining length)."""
    if isinstance(x, EdgePoint):
        if isinstance(y, EdgePoint) and x.key == y.key:
            return 0, abs(x.s - y.s)
        v, d, _ = _toward(x, y)
        n, f = distance_parts(v, y)
        return n, f + d
    if isinstance(y, EdgePoint):
        return distance_parts(y, x)
    if x.flat == y.flat:
        return 0, math.hypot(x.x - y.x, x.y - y.y)
    _, i, r = common_prefix(x.flat, y.flat)
    ex, px, ax, ay = _climb(x.flat, i, r, x.x, x.y)
    ey, py, bx, by = _climb(y.flat, i, r, y.x, y.y)
    return ex + ey, px + py + math.hypot(ax - bx, ay - by)


def distance(x: Point, y: Point) -> float:
    n, f = distance_parts(x, y)
    return n + f


def norm(x: Point) -> float:
    return distance(BASEPOINT, x)


def gate_to_flat(x: Point, Y: FlatAddress) -> Point:
    if isinstance(x, FlatPoint) and x.flat == Y:
        return x
    key = _key(x)
    if Y.is_prefix_of(key) and key.depth > Y.depth:
        i, j, _ = key.block(Y.depth + 1)
        return FlatPoint(Y, i, j)
    return FlatPoint(Y, 0, 0)


# ---------------------------------------------------------------- legs


def _descend(flat: FlatAddress, i: int, j: int, sign: int, m: int) -> tuple[FlatAddress, int, int]:
    """Flat and local vertex after m downward sign-edges from (flat, i, j)."""
    if m == 0:
        return flat, i, j
    return flat.child(i, j, sign, m), 0, 0


@dataclass(frozen=True)
class FlatLeg:
    flat: FlatAddress
    entry: tuple[float, float]
    exit: tuple[float, float]
    unbounded: bool = False

    @property
    def length(self) -> float:
        if self.unbounded:
            return math.inf
        return math.hypot(self.exit[0] - self.entry[0], self.exit[1] - self.entry[1])

    def _dir(self) -> tuple[float, float]:
        dx, dy = self.exit[0] - self.entry[0], self.exit[1] - self.entry[1]
        n = math.hypot(dx, dy)
        return dx / n, dy / n

    def point(self, s: float) -> FlatPoint:
        if s <= 0:
            return FlatPoint(self.flat, *self.entry)
        if not self.unbounded and s >= self.length:
            return FlatPoint(self.flat, *self.exit)
        ux, uy = self._dir()
        return FlatPoint(self.flat, self.entry[0] + s * ux, self.entry[1] + s * uy)

    def nearest(self, z: Point) -> tuple[float, float]:
        g = gate_to_flat(z, self.flat)
        dz = 0.0 if g is z else distance(z, g)
        ux, uy = self._dir()
        s = (g.x - self.entry[0]) * ux + (g.y - self.entry[1]) * uy
        s = max(0.0, s if self.unbounded else min(s, self.length))
        p = self.point(s)
        return s, dz + math.hypot(g.x - p.x, g.y - p.y)

    @property
    def start(self) -> FlatPoint:
        return FlatPoint(self.flat, *self.entry)

    @property
    def end(self) -> FlatPoint:
        return FlatPoint(self.flat, *self.exit)


@dataclass(frozen=True)
class EdgeLeg:
    """A run of `count` consecutive sign-edges hanging downward from (flat, i, j).

    With `upward` the run is traversed from its bottom vertex to (flat, i, j).
    """
    flat: FlatAddress
    i: int
    j: int
    sign: int
    count: float = 1
    upward: bool = False

    def __post_init__(self):
        if self.flat.leads_up(self.i, self.j, self.sign):
            raise ValueError("edge run must be given by its top vertex")
        if self.count < 1:
            raise ValueError("edge run needs at least one edge")

    @property
    def length(self) -> float:
        return float(self.count)

    @property
    def vertex(self) -> Vertex:
        return Vertex(self.flat, self.i, self.j)

    def _down(self, s: float) -> Point:
        m = math.floor(s)
        frac = s - m
        if m >= self.count:
            m, frac = int(self.count), 0.0
        f, a, b = _descend(self.flat, self.i, self.j, self.sign, int(m))
        if frac <= 0:
            return FlatPoint(f, a, b)
        return edge_point(f, a, b, self.sign, frac)

    def point(self, s: float) -> Point:
        s = min(max(s, 0.0), self.length)
        return self._down(self.count - s if self.upward else s)

    def bottom(self, m: int) -> FlatAddress:
        return _descend(self.flat, self.i, self.j, self.sign, m)[0]

    def nearest(self, z: Point) -> tuple[float, float]:
        s, d = self._nearest_down(z)
        return (self.count - s if self.upward else s), d

    def _nearest_down(self, z: Point) -> tuple[float, float]:
        key = _key(z)
        first = self.flat.child(self.i, self.j, self.sign)
        top = FlatPoint(self.flat, self.i, self.j)
        if not first.is_prefix_of(key):
            return 0.0, distance(z, top)
        d0 = self.flat.depth
        m = min(self.count, key.depth - d0)
        c = common_prefix(key, self.bottom(int(m)))[0]
        jj = c - d0
        if isinstance(z, EdgePoint) and key.depth == c:
            return jj - 1 + z.s, 0.0
        f, a, b = _descend(self.flat, self.i, self.j, self.sign, jj)
        return float(jj), distance(z, FlatPoint(f, a, b))

    @property
    def start(self) -> Point:
        return self.point(0.0)

    @property
    def end(self) -> Point:
        return self.point(self.length)


@dataclass(frozen=True)
class EdgeBit:
    """Part of a single edge, from parameter s0 to s1 (parent-side coordinates)."""
    flat: FlatAddress
    i: int
    j: int
    sign: int
    s0: float
    s1: float

    @property
    def length(self) -> float:
        return abs(self.s1 - self.s0)

    def point(self, s: float) -> Point:
        s = min(max(s, 0.0), self.length)
        u = self.s0 + (s if self.s1 >= self.s0 else -s)
        return edge_point(self.flat, self.i, self.j, self.sign, u)

    def nearest(self, z: Point) -> tuple[float, float]:
        lo, hi = min(self.s0, self.s1), max(self.s0, self.s1)
        if isinstance(z, EdgePoint) and z.key == (self.flat, self.i, self.j, self.sign):
            u = min(max(z.s, lo), hi)
            return abs(u - self.s0), abs(u - z.s)
        a, b = self.point(0.0), self.point(self.length)
        da, db = distance(z, a), distance(z, b)
        return (0.0, da) if da <= db else (self.length, db)

    @property
    def start(self) -> Point:
        return self.point(0.0)

    @property
    def end(self) -> Point:
        return self.point(self.length)


Leg = Union[FlatLeg, EdgeLeg, EdgeBit]


def _climb_legs(p: FlatPoint, i: int, r: int) -> tuple[list[Leg], tuple[float, float]]:
    """Legs climbing from p to the shared flat (see _climb), and the arrival point."""
    addr = p.flat
    syl = addr.syllables
    if i < len(syl) and r == abs(syl[i][2]):
        i, r = i + 1, 0
    legs: list[Leg] = []
    cur = (p.x, p.y)
    n = len(syl)
    while n > i:
        flat = FlatAddress(syl[:n])
        if cur != (0.0, 0.0):
            legs.append(FlatLeg(flat, cur, (0.0, 0.0)))
        a, b, k = syl[n - 1]
        sg = _sign(k)
        if n - 1 == i and r > 0:
            top = FlatAddress(syl[: n - 1] + ((a, b, sg * r),))
            legs.append(EdgeLeg(top, 0, 0, sg, abs(k) - r, upward=True))
            return legs, (0.0, 0.0)
        top = FlatAddress(syl[: n - 1])
        legs.append(EdgeLeg(top, a, b, sg, abs(k), upward=True))
        cur = (float(a), float(b))
        n -= 1
    return legs, cur


def _reverse(leg: Leg) -> Leg:
    if isinstance(leg, FlatLeg):
        return FlatLeg(leg.flat, leg.exit, leg.entry)
    if isinstance(leg, EdgeLeg):
        return EdgeLeg(leg.flat, leg.i, leg.j, leg.sign, leg.count, not leg.upward)
    return EdgeBit(leg.flat, leg.i, leg.j, leg.sign, leg.s1, leg.s0)


def geodesic_legs(x: Point, y: Point) -> list[Leg]:
    """The unique geodesic from x to y as flat segments and edge runs."""
    if isinstance(x, EdgePoint) and isinstance(y, EdgePoint) and x.key == y.key:
        if x.s == y.s:
            return []
        return [EdgeBit(x.flat, x.i, x.j, x.sign, x.s, y.s)]
    head: list[Leg] = []
    tail: list[Leg] = []
    if isinstance(x, EdgePoint):
        v, _, u = _toward(x, y)
        head.append(EdgeBit(x.flat, x.i, x.j, x.sign, x.s, u))
        x = v
    if isinstance(y, EdgePoint):
        v, _, u = _toward(y, x)
        tail.append(EdgeBit(y.flat, y.i, y.j, y.sign, u, y.s))
        y = v
    if x.flat == y.flat:
        mid = [FlatLeg(x.flat, x.coords, y.coords)] if x.coords != y.coords else []
        return head + mid + tail
    _, i, r = common_prefix(x.flat, y.flat)
    up, a = _climb_legs(x, i, r)
    down, b = _climb_legs(y, i, r)
    meet = x.flat.prefix(common_prefix(x.flat, y.flat)[0])
    mid = [FlatLeg(meet, a, b)] if a != b else []
    return head + up + mid + [_reverse(l) for l in reversed(down)] + tail


class Geodesic:
    """Unit-speed parametrization of a finite leg sequence."""

    def __init__(self, legs: list[Leg], start: Point | None = None):
        self.legs = legs
        self.starts = []
        acc = 0.0
        for leg in legs:
            self.starts.append(acc)
            acc += leg.length
        self.length = math.fsum(leg.length for leg in legs)
        self._start = start

    def point(self, t: float) -> Point:
        if t < -TOL or t > self.length + TOL:
            raise ValueError(f"parameter {t} outside [0, {self.length}]")
        if not self.legs:
            return self._start
        k = max(0, int(np.searchsorted(self.starts, t, side="right")) - 1)
        return self.legs[k].point(t - self.starts[k])

    def nearest(self, z: Point) -> tuple[float, float]:
        """Closest parameter and distance; ties go to the smaller parameter."""
        if not self.legs:
            return 0.0, distance(z, self._start)
        best = (0.0, math.inf)
        for s0, leg in zip(self.starts, self.legs):
            s, d = leg.nearest(z)
            if d < best[1] - 1e-12:
                best = (s0 + s, d)
        return best


def geodesic_segment(x: Point, y: Point) -> Geodesic:
    return Geodesic(geodesic_legs(x, y), start=x)


@dataclass
class CutChain:
    vertices: list[Vertex]
    links: list[str]

    @property
    def edge_crossings(self) -> int:
        return self.links.count("edge")


def tree_path(x: Point, y: Point) -> CutChain:
    """Cut vertices on the geodesic from x to y (edge runs expanded one edge at a time)."""
    verts: list[Vertex] = []
    links: list[str] = []

    def push(p: Point, link: str | None):
        v = Vertex(p.flat, int(p.x), int(p.y))
        if verts and verts[-1] == v:
            return
        if verts:
            links.append(link)
        verts.append(v)

    for leg in geodesic_legs(x, y):
        if isinstance(leg, EdgeLeg):
            for m in range(int(leg.count) + 1):
                push(leg.point(float(m)), "edge" if m else "flat")
        elif isinstance(leg, EdgeBit):
            for end in (leg.start, leg.end):
                if isinstance(end, FlatPoint):
                    push(end, "flat")
    return CutChain(verts, links)


def chain_length(x: Point, y: Point, chain: CutChain) -> float:
    if not chain.vertices:
        return distance(x, y)
    total = distance(x, chain.vertices[0].point)
    for a, b, link in zip(chain.vertices, chain.vertices[1:], chain.links):
        if link == "edge":
            total += 1.0
        else:
            total += math.hypot(a.i - b.i, a.j - b.j)
    return total + distance(chain.vertices[-1].point, y)


# ---------------------------------------------------------------- words


_WORD_TOKEN = re.compile(r"\s*([gG])([123])(?:\^(-?\d+))?\s*")


def parse_word(text: str) -> list[tuple[int, int]]:
    """'g1^3 g2^4 g3 g1^-1' -> [(1, 3), (2, 4), (3, 1), (1, -1)]; capital G inverts."""
    out, pos = [], 0
    text = text.replace("*", " ")
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _WORD_TOKEN.match(text, pos)
        if not m:
            raise ValueError(f"bad generator at position {pos}: {text[pos:pos + 8]!r}")
        e = int(m.group(3)) if m.group(3) else 1
        out.append((int(m.group(2)), -e if m.group(1) == "G" else e))
        pos = m.end()
    return out


def canonicalize(word: Iterable[tuple[int, int]] | str) -> Vertex:
    if isinstance(word, str):
        word = parse_word(word)
    syl = list(FlatAddress().syllables)
    x = y = 0
    for gen, e in word:
        if gen == 1:
            x += e
        elif gen == 2:
            y += e
        elif gen == 3:
            if e == 0:
                continue
            sg = _sign(e)
            left = abs(e)
            # cancel against the edge we came in by
            if x == 0 and y == 0 and syl and _sign(syl[-1][2]) == -sg:
                a, b, k = syl[-1]
                take = min(left, abs(k))
                left -= take
                if take == abs(k):
                    syl.pop()
                    x, y = a, b
                else:
                    syl[-1] = (a, b, k + sg * take)
            if left:
                if x == 0 and y == 0 and syl and _sign(syl[-1][2]) == sg:
                    a, b, k = syl[-1]
                    syl[-1] = (a, b, k + sg * left)
                else:
                    syl.append((x, y, sg * left))
                x = y = 0
        else:
            raise ValueError(f"unknown generator g{gen}")
    return Vertex(FlatAddress(tuple(syl)), x, y)


# ---------------------------------------------------------------- sampling


def sample_ball(x: Point, R: float, count: int, seed=None, max_pieces: int = 512) -> list[Point]:
    """Random points of the closed ball B(x, R): one per reachable flat disc, rest by area."""
    if R <= 0:
        raise ValueError("radius must be positive")
    if count <= 0:
        return []
    rng = np.random.default_rng(seed)
    discs: list[tuple[FlatAddress, float, float, float]] = []
    # heap of (-radius, tiebreak, flat, cx, cy, came_from)
    heap: list = []
    tick = 0
    if isinstance(x, EdgePoint):
        for v, d in ((FlatPoint(x.flat, x.i, x.j), x.s), (FlatPoint(x.child, 0, 0), 1 - x.s)):
            if d <= R:
                other = x.child if v.flat == x.flat else x.flat
                heapq.heappush(heap, (-(R - d), tick, v.flat, v.x, v.y, other))
                tick += 1
    else:
        heapq.heappush(heap, (-R, tick, x.flat, x.x, x.y, None))
    seen = set()
    while heap and len(discs) < max_pieces:
        negr, _, flat, cx, cy, came = heapq.heappop(heap)
        rho = -negr
        if flat in seen:
            continue
        seen.add(flat)
        discs.append((flat, cx, cy, rho))
        for i in range(math.ceil(cx - rho), math.floor(cx + rho) + 1):
            for j in range(math.ceil(cy - rho), math.floor(cy + rho) + 1):
                left = rho - math.hypot(i - cx, j - cy) - 1.0
                if left < 0:
                    continue
                for sg in (1, -1):
                    nf, (a, b) = flat.across(i, j, sg)
                    if nf == came or nf in seen:
                        continue
                    heapq.heappush(heap, (-left, tick, nf, float(a), float(b), flat))
                    tick += 1
    # draws are consumed point by point, so a smaller count gives a prefix
    out: list[Point] = []
    for flat, cx, cy, rho in discs[:count]:
        out.append(_disc_sample(rng, flat, cx, cy, rho))
    if len(out) < count:
        cdf = np.cumsum([max(rho, 1e-12) ** 2 for *_, rho in discs])
        for _ in range(count - len(out)):
            k = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(discs) - 1)
            out.append(_disc_sample(rng, *discs[k]))
    return out


def _disc_sample(rng, flat: FlatAddress, cx: float, cy: float, rho: float) -> FlatPoint:
    r = rho * math.sqrt(rng.random()) * (1 - 1e-12)
    th = 2 * math.pi * rng.random()
    return FlatPoint(flat, cx + r * math.cos(th), cy + r * math.sin(th))


# ---------------------------------------------------------------- text forms


def _fmt(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


_BLOCK = re.compile(r"\((-?\d+),(-?\d+)\)([+-])(?:\^(\d+))?")


def parse_address(text: str) -> FlatAddress:
    parts = text.strip().split("/")
    if parts[0] != "Y0":
        raise ValueError(f"address must start with 'Y0', got {parts[0]!r}")
    addr = Y0
    for n, tok in enumerate(parts[1:], start=1):
        m = _BLOCK.fullmatch(tok)
        if not m:
            raise ValueError(f"bad block #{n} in address: {tok!r}")
        i, j = int(m.group(1)), int(m.group(2))
        sg = 1 if m.group(3) == "+" else -1
        reps = int(m.group(4)) if m.group(4) else 1
        if reps < 1:
            raise ValueError(f"bad repeat count in {tok!r}")
        addr = addr.child(i, j, sg, reps)
    return addr


_NUM = r"(-?(?:\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|inf))"
_PT = re.compile(r"pt:(.+):\(" + _NUM + r"," + _NUM + r"\)")
_EDGE = re.compile(r"edge:(.+):\((-?\d+),(-?\d+)\):([+-]):" + _NUM)


def parse_point(text: str) -> Point:
    s = text.strip()
    if s.startswith("pt:"):
        m = _PT.fullmatch(s)
        if not m:
            raise ValueError(f"bad point {s!r}: expected pt:<address>:(x,y)")
        return FlatPoint(parse_address(m.group(1)), float(m.group(2)), float(m.group(3)))
    if s.startswith("edge:"):
        m = _EDGE.fullmatch(s)
        if not m:
            raise ValueError(f"bad point {s!r}: expected edge:<address>:(i,j):<+|->:<s>")
        flat = parse_address(m.group(1))
        sg = 1 if m.group(4) == "+" else -1
        return edge_point(flat, int(m.group(2)), int(m.group(3)), sg, float(m.group(5)))
    head = s.split(":", 1)[0]
    raise ValueError(f"bad point prefix {head!r}: expected 'pt' or 'edge'")
