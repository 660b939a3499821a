"""Finite-horizon checks on neighbourhoods of points in the kappa-Morse boundary.

A boundary point is represented by its geodesic ray from the basepoint. The
neighbourhood test quantifies over a finite family of quasi-geodesics in the
candidate class, so every verdict carries a `finite-family` flag.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple

from .rays import (
    ItineraryRay,
    PiecewisePath,
    contraction_ratio,
    neighborhood_excess,
    spur_path,
    surgery,
)
from .space import EdgeLeg, FlatPoint, Vertex, norm
from .sublinear import GaugeConstants, MorseGauge, SublinearFn, small_compared

DEFAULT_CAP = (1.0, 1.0)
LADDER = (1, 3, 9)


# ---------------------------------------------------------------- boundary points


def tail_kind(ray: ItineraryRay, max_legs: int = 100_000) -> str:
    """'edge' if the ray ends in an endless g3 run, 'flat' if it ends inside a flat."""
    k = 0
    while k < max_legs and ray._ensure_legs(k + 1):
        leg = ray._legs[k]
        if leg.length == math.inf:
            return "edge" if isinstance(leg, EdgeLeg) else "flat"
        k += 1
    raise ValueError(f"{ray.name}: no tail within {max_legs} legs")


def total_horizon(ray: ItineraryRay) -> float:
    """Parameter where the endless tail starts."""
    tail_kind(ray)
    return float(ray._starts[-1])


@dataclass
class BoundaryPoint:
    ray: ItineraryRay
    kappa: SublinearFn
    c_b: float
    horizon: float
    sup: float
    gauge: MorseGauge = field(repr=False)

    @classmethod
    def certify(cls, ray: ItineraryRay, kappa: SublinearFn, c: float | None = None,
                horizon: float | None = None) -> "BoundaryPoint":
        """Certify ray as kappa-contracting.

        A ray ending in an endless g3 run has finitely many flat segments, so its
        sup ratio is exact when the horizon covers the tail start. The constant is
        max(sup, 1) unless c is given, in which case sup <= c is required.
        """
        if tail_kind(ray) == "flat":
            raise ValueError(f"{ray.name} ends inside a flat and is not contracting for any kappa")
        T = total_horizon(ray) + 1 if horizon is None else horizon
        sup = contraction_ratio(ray, kappa, T).sup
        if c is None:
            c = max(sup, 1.0)
        elif sup > c:
            raise ValueError(f"{ray.name}: sup ratio {sup:.6g} exceeds c = {c}")
        return cls(ray, kappa, float(c), float(T), sup, MorseGauge(float(c), kappa))

    def m(self, q: float, Q: float) -> float:
        return self.gauge(q, Q)

    def constants(self, q: float, Q: float) -> GaugeConstants:
        return self.gauge.constants(q, Q)

    @property
    def name(self) -> str:
        return self.ray.name


# ---------------------------------------------------------------- fellow travelling


class FellowTravel(NamedTuple):
    n_ab: float
    n_ba: float
    truncated: bool


def _as_path(x) -> PiecewisePath:
    return PiecewisePath.from_ray(x) if isinstance(x, ItineraryRay) else x


def _gap(z, target, T_proj) -> tuple[float, bool]:
    """Distance from z to target cut at norm T_proj, and whether the cut was hit."""
    if isinstance(target, ItineraryRay):
        p = target.project(z, T_proj)
        return p.d, p.truncated
    k, s, d = target.nearest(z, max_norm=T_proj)
    near = target.start if k < 0 else target.leg_at(k).point(s)
    return d, norm(near) >= T_proj - 1e-9


def _one_way(a, b, kappa: SublinearFn, T, T_proj, per_leg) -> tuple[float, bool]:
    worst, cut = 0.0, False
    for smp in _as_path(a).samples(max_norm=T, per_leg=per_leg):
        t = norm(smp.point)
        if t <= 0:
            continue
        d, hit = _gap(smp.point, b, T_proj)
        cut = cut or hit
        worst = max(worst, d / kappa(t))
    return worst, cut


def fellow_travel(a: ItineraryRay | PiecewisePath, b: ItineraryRay | PiecewisePath,
                  kappa: SublinearFn, T: float, enlarge: float = 2.0, per_leg: int = 8) -> FellowTravel:
    """Sampled sup over points of norm <= T of d(a(t), b)/kappa(|a(t)|), both ways.

    The target is cut at norm enlarge*T; a nearest point on that cut is flagged.
    """
    if T <= 0:
        raise ValueError("horizon must be positive")
    n_ab, c1 = _one_way(a, b, kappa, T, enlarge * T, per_leg)
    n_ba, c2 = _one_way(b, a, kappa, T, enlarge * T, per_leg)
    return FellowTravel(n_ab, n_ba, c1 or c2)


# ---------------------------------------------------------------- radii


def smallest_radius(ok: Callable[[float], bool], lo: float = 0.0, rel: float = 1e-12) -> float:
    """Smallest R >= lo with ok(R), assuming ok is upward closed; doubling then bisection."""
    if ok(lo):
        return lo
    hi = max(2 * lo, 1.0)
    while not ok(hi):
        lo, hi = hi, 2 * hi
        if hi > 1e300:
            raise OverflowError("no radius found below 1e300")
    while hi - lo > rel * hi:
        mid = (lo + hi) / 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def strong_morse_radius(gauge: GaugeConstants | float, r: float, n: float,
                        kappa: SublinearFn, kappa2: SublinearFn) -> float:
    """Smallest R with m0*m1*kappa(R) + n*kappa2(R) <= R - r."""
    if r < 0 or n <= 0:
        raise ValueError("need r >= 0 and n > 0")
    mm = gauge.m0 * gauge.m1 if isinstance(gauge, GaugeConstants) else float(gauge)
    return smallest_radius(lambda R: mm * kappa(R) + n * kappa2(R) <= R - r, lo=r)


def _small_radius(m: float, kappa: SublinearFn, factor: float) -> float:
    """Smallest rho with m <= rho/(factor*kappa(rho))."""
    return smallest_radius(lambda rho: rho > 0 and m <= rho / (factor * kappa(rho)))


@dataclass
class Radius:
    value: float
    binding: str
    parts: dict[str, float]


def _pick(parts: dict[str, float]) -> Radius:
    name = max(parts, key=lambda k: parts[k])
    return Radius(parts[name], name, parts)


@dataclass
class NeighborhoodRadii:
    """r_b for (b, r) and the maps psi1, psi2 for a second point a.

    cap is the largest (q, Q) considered; surgery multiplies q by 9.
    """
    b: BoundaryPoint
    r: float
    cap: tuple[float, float] = DEFAULT_CAP

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("radius must be positive")
        q, Q = self.cap
        k = self.b.kappa
        n = self.b.m(9 * q, Q)
        self.n = n
        self.r_b_detail = _pick({
            "2r": 2 * self.r,
            "small(m_b(9q,Q))": _small_radius(n, k, 2),
            "strong-morse": strong_morse_radius(self.b.constants(q, Q), self.r, n, k, k),
        })

    @property
    def r_b(self) -> float:
        return self.r_b_detail.value

    def psi1(self, a: BoundaryPoint, r_b: float | None = None) -> Radius:
        r_b = self.r_b if r_b is None else r_b
        q, Q = self.cap
        return _pick({"2r_b": 2 * r_b, "small4(m_a(q,Q))": _small_radius(a.m(q, Q), a.kappa, 4)})

    def psi2(self, a: BoundaryPoint, r_b: float | None = None) -> Radius:
        r_b = self.r_b if r_b is None else r_b
        q, Q = self.cap
        u = a.m(1, 0) + 4 * a.m(q, Q)
        k = a.kappa
        return _pick({"2r_b": 2 * r_b, "2u*kappa": smallest_radius(lambda rho: rho >= 2 * u * k(rho))})


def neighborhood_radii(b: BoundaryPoint, r: float, cap: tuple[float, float] = DEFAULT_CAP) -> NeighborhoodRadii:
    return NeighborhoodRadii(b, r, cap)


# ---------------------------------------------------------------- neighbourhood membership


@dataclass
class MemberRow:
    name: str
    q: float
    Q: float
    m: float
    qualified: bool
    excess: float | None


@dataclass
class MembershipVerdict:
    verdict: str
    binding: str | None
    excess: float
    rows: list[MemberRow]
    flags: tuple[str, ...]

    def __str__(self) -> str:
        tail = f" (binding: {self.binding})" if self.binding else ""
        return f"{self.verdict}{tail} [{', '.join(self.flags)}]"


def _spur_base(ray: ItineraryRay, t: float):
    for s in (t, math.floor(t), math.ceil(t)):
        if s >= 0 and isinstance(ray.point(s), FlatPoint):
            return s
    return None


def quasi_family(center: BoundaryPoint, candidate: BoundaryPoint, r: float) -> list[tuple[str, PiecewisePath]]:
    """Geodesic of the candidate, surgeries of the centre's geodesic onto it, and spur detours."""
    ray = candidate.ray
    fam = [("geodesic", PiecewisePath.from_ray(ray))]
    centre = PiecewisePath.from_ray(center.ray)
    for s in (r / 2, r, 2 * r):
        try:
            fam.append((f"surgery@{s:.6g}", surgery(centre, ray, s)))
        except ValueError as err:
            if "surgery-gap" not in str(err):
                raise
    for s in (r / 4, r / 2):
        t = _spur_base(ray, s)
        if t is None:
            continue
        fam.append((f"spur@{t:.6g}", spur_path(ray, t, center.kappa(t))))
    return fam


def U_membership(center: BoundaryPoint, r: float, candidate: BoundaryPoint,
                 min_family: int = 1, ladder: Iterable[int] = LADDER,
                 pairs: int = 300, seed: int = 0) -> MembershipVerdict:
    """Is the candidate in U(center, r)? Returns 'in', 'out' or 'inconclusive'.

    Each family member counts if the centre's gauge at its measured constants is
    small compared to r; it must then stay in the kappa-neighbourhood of the
    centre's geodesic with that gauge up to norm r.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    k = center.kappa
    flags = ["finite-family", "sampled"]
    if not small_compared(center.m(1, 0), r, k):
        # no quasi-geodesic at all is admissible at this radius
        return MembershipVerdict("in", None, -math.inf, [], tuple(flags + ["vacuous"]))
    rows = []
    for name, path in quasi_family(center, candidate, r):
        best = None
        for q, Q in path.measured_constants(ladder=tuple(ladder), max_norm=2 * r, pairs=pairs, seed=seed):
            m = center.m(q, Q)
            if best is None or m < best[2]:
                best = (q, Q, m)
        q, Q, m = best
        ok = small_compared(m, r, k)
        ex = neighborhood_excess(path, center.ray, m, k, r) if ok else None
        rows.append(MemberRow(name, q, Q, m, ok, ex))
    used = [row for row in rows if row.qualified]
    if len(used) < min_family:
        return MembershipVerdict("inconclusive", None, math.nan, rows, tuple(flags))
    worst = max(used, key=lambda row: row.excess)
    verdict = "out" if worst.excess > 0 else "in"
    return MembershipVerdict(verdict, worst.name, worst.excess, rows, tuple(flags))


# ---------------------------------------------------------------- neighbourhood-system samples


@dataclass
class TripleCheck:
    triple_id: str
    part: int
    premise: bool
    conclusion: bool
    detail: str

    @property
    def holds(self) -> bool:
        return (not self.premise) or self.conclusion


def check_triple(triple_id: str, a: BoundaryPoint, b: BoundaryPoint, c: BoundaryPoint, r: float,
                 cap: tuple[float, float] = DEFAULT_CAP, **kw) -> list[TripleCheck]:
    """Both implications of the neighbourhood-system property on one triple.

    Part 1: a in U(b, r_b) and c in U(a, psi1) give c in U(b, r).
    Part 2: c in U(a, psi2) and c in U(b, r_b) give a in U(b, r).
    """
    rad = neighborhood_radii(b, r, cap)
    r_b = rad.r_b
    p1, p2 = rad.psi1(a), rad.psi2(a)

    def inside(centre, rr, cand):
        return U_membership(centre, rr, cand, **kw).verdict == "in"

    a_in_b = inside(b, r_b, a)
    c_in_a1 = inside(a, p1.value, c)
    prem1 = a_in_b and c_in_a1
    concl1 = inside(b, r, c) if prem1 else False
    c_in_a2 = inside(a, p2.value, c)
    c_in_b = inside(b, r_b, c)
    prem2 = c_in_a2 and c_in_b
    concl2 = inside(b, r, a) if prem2 else False
    d1 = f"r_b={r_b:.6g} ({rad.r_b_detail.binding}) psi1={p1.value:.6g} ({p1.binding})"
    d2 = f"r_b={r_b:.6g} psi2={p2.value:.6g} ({p2.binding})"
    return [TripleCheck(triple_id, 1, prem1, concl1, d1), TripleCheck(triple_id, 2, prem2, concl2, d2)]


def triples_csv(checks: Iterable[TripleCheck]) -> str:
    lines = ["triple_id,part,holds"]
    lines += [f"{c.triple_id},{c.part},{str(c.holds).lower()}" for c in checks]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- nested boundaries


@dataclass
class NestedRow:
    ray: str
    sup_small: float
    sup_large: float
    passes_small: bool
    passes_large: bool


def nested_boundary_check(kappa: SublinearFn, kappa_small: SublinearFn, M: float,
                          rays: Iterable[ItineraryRay], c: float, T: float,
                          grid: Iterable[float] | None = None) -> list[NestedRow]:
    """Check that passing for kappa_small at c implies passing for kappa at c*M.

    Requires kappa_small <= M*kappa on the grid.
    """
    grid = list(grid) if grid is not None else [10 ** (e / 8) for e in range(-16, 160)]
    for t in grid:
        if kappa_small(t) > M * kappa(t) * (1 + 1e-12):
            raise ValueError(f"{kappa_small.name}({t:.4g}) > {M}*{kappa.name}({t:.4g})")
    out = []
    for ray in rays:
        s_small = contraction_ratio(ray, kappa_small, T).sup
        s_large = contraction_ratio(ray, kappa, T).sup
        row = NestedRow(ray.name, s_small, s_large, s_small <= c, s_large <= c * M)
        if row.passes_small and not row.passes_large:
            raise AssertionError(f"{ray.name}: passes {kappa_small.name} but not {kappa.name}")
        out.append(row)
    return out


# ---------------------------------------------------------------- separating edges


def traverses_edge(ray: ItineraryRay, vertex: Vertex, sign: int, T=math.inf) -> bool:
    return ray.traverses(vertex, sign, T)


class Divergence(NamedTuple):
    vertex: Vertex
    sign: int
    height: float
    owner: int  # 0 if the first ray crosses the edge, 1 for the second
    crossed_at: float  # parameter of the owner when it enters the edge

    @property
    def edge(self) -> str:
        return f"{self.vertex}:{'+' if self.sign > 0 else '-'}"


def _first_edge_after(ray: ItineraryRay, k: int) -> tuple[Vertex, int, float] | None:
    """First edge crossed by ray from leg k on."""
    while ray._ensure_legs(k + 1):
        leg = ray._legs[k]
        if isinstance(leg, EdgeLeg):
            return leg.vertex, leg.sign, float(ray._starts[k])
        if leg.length == math.inf:
            return None
        k += 1
    return None


def first_divergence(a: ItineraryRay, b: ItineraryRay, max_legs: int = 100_000) -> Divergence | None:
    """An edge crossed by exactly one of the rays, found where they first part.

    Returns None if the rays coincide or part inside a flat they never leave.
    """
    rays = (a, b)
    for k in range(max_legs):
        have = [r._ensure_legs(k + 1) for r in rays]
        if not all(have):
            return None
        la, lb = a._legs[k], b._legs[k]
        start = float(a._starts[k])
        if la == lb:
            if la.length == math.inf:
                return None
            continue
        if isinstance(la, EdgeLeg) and isinstance(lb, EdgeLeg):
            if la.sign != lb.sign:
                return Divergence(la.vertex, la.sign, start, 0, start)
            owner = 0 if la.count > lb.count else 1
            short = lb if owner == 0 else la
            m = int(short.count)
            return Divergence(Vertex(short.bottom(m), 0, 0), la.sign, start + m, owner, start + m)
        if isinstance(la, EdgeLeg):
            return Divergence(la.vertex, la.sign, start, 0, start)
        if isinstance(lb, EdgeLeg):
            return Divergence(lb.vertex, lb.sign, start, 1, start)
        # both flat legs from the same entry point with different ends
        for owner, ray in enumerate(rays):
            hit = _first_edge_after(ray, k + 1)
            if hit is not None:
                v, sign, at = hit
                return Divergence(v, sign, start, owner, at)
        return None
    raise ValueError(f"rays agree on the first {max_legs} legs")


def separation_csv(rows: Iterable[tuple[str, Divergence | None]]) -> str:
    lines = ["ray_id,edge,first_divergence_height"]
    for rid, d in rows:
        lines.append(f"{rid},{d.edge if d else ''},{d.height!r}" if d else f"{rid},,")
    return "\n".join(lines) + "\n"


def exit_family(j: int) -> ItineraryRay:
    """Leave the base flat at (j, 0), then follow g3 edges forever."""
    moves = [("flat", j, 0)] if j else []
    return ItineraryRay(moves + [("edge", 1, math.inf)], name=f"b_{j}")


def branch_triple(h1: int, h2: int, outlier: str = "b") -> dict[str, ItineraryRay]:
    """Rays a, b, c on a three-leaf tree of g3 runs.

    The outlier leaves the common trunk at height h1; the other two stay together
    until height h2. Every flat segment has length 1.
    """
    h1, h2 = int(h1), int(h2)
    if h1 < 1 or h2 <= h1 + 1:
        raise ValueError("need 1 <= h1 and h2 > h1 + 1")
    trunk = [("edge", 1, h1)]
    out = {}
    pair = [n for n in "abc" if n != outlier]
    out[outlier] = ItineraryRay(trunk + [("flat", 0, 1), ("edge", 1, math.inf)], name=outlier)
    for n, d in zip(pair, ((0, 1), (1, 0))):
        moves = trunk + [("flat", 1, 0), ("edge", 1, h2 - h1 - 1), ("flat", *d), ("edge", 1, math.inf)]
        out[n] = ItineraryRay(moves, name=n)
    return out
