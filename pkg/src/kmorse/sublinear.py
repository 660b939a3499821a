"""Sublinear functions and the gauge-constant arithmetic built on them."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

KINDS = ("one", "log", "sqrt", "sqrt_t_log_t", "pow", "table")

# the Morse-to-contracting constant factors as 80 * 1025
CONTRACTION_FACTOR = 82000
CONTRACTION_SPLIT = (80, 1025)


@dataclass(frozen=True)
class SublinearFn:
    kind: str
    p: float | None = None
    grid: tuple[tuple[float, float], ...] = ()
    floor: bool = True
    label: str = field(default="", compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}; valid: {', '.join(KINDS)}")
        if self.kind == "pow" and not (self.p is not None and 0 < self.p < 1):
            raise ValueError("pow exponent must lie in (0, 1)")
        if self.kind == "table":
            if len(self.grid) < 2:
                raise ValueError("tabulated function needs at least 2 grid points")
            ts = [t for t, _ in self.grid]
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValueError("grid abscissae must be strictly increasing")

    def __call__(self, t: float) -> float:
        if t < 0:
            raise ValueError(f"kappa evaluated at negative t={t}")
        raw = self._raw(float(t))
        return max(raw, 1.0) if self.floor else raw

    def _raw(self, t: float) -> float:
        k = self.kind
        if k == "one":
            return 1.0
        if k == "log":
            return math.log(t) if t > 0 else -math.inf
        if k == "sqrt":
            return math.sqrt(t)
        if k == "sqrt_t_log_t":
            # log clamped at 1 below e keeps kappa(t)/t non-increasing
            return math.sqrt(t * max(math.log(t), 1.0)) if t > 0 else 0.0
        if k == "pow":
            return t ** self.p
        return _table_eval(self.grid, t)

    def values(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if np.any(ts < 0):
            raise ValueError("kappa evaluated at negative t")
        k = self.kind
        with np.errstate(divide="ignore", invalid="ignore"):
            if k == "one":
                raw = np.ones_like(ts)
            elif k == "log":
                raw = np.where(ts > 0, np.log(np.where(ts > 0, ts, 1.0)), -np.inf)
            elif k == "sqrt":
                raw = np.sqrt(ts)
            elif k == "sqrt_t_log_t":
                safe = np.where(ts > 0, ts, 1.0)
                raw = np.where(ts > 0, np.sqrt(safe * np.maximum(np.log(safe), 1.0)), 0.0)
            elif k == "pow":
                raw = ts ** self.p
            else:
                raw = _table_values(self.grid, ts)
        return np.maximum(raw, 1.0) if self.floor else raw

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind == "pow":
            return f"pow:{self.p:g}"
        return self.kind


def _table_eval(grid: Sequence[tuple[float, float]], t: float) -> float:
    ts = [g[0] for g in grid]
    if t <= ts[0]:
        return grid[0][1]
    if t >= ts[-1]:
        (t0, v0), (t1, v1) = grid[-2], grid[-1]
        return v1 + (v1 - v0) / (t1 - t0) * (t - t1)
    i = int(np.searchsorted(ts, t, side="right")) - 1
    (t0, v0), (t1, v1) = grid[i], grid[i + 1]
    return v0 + (v1 - v0) * (t - t0) / (t1 - t0)


def _table_values(grid, ts: np.ndarray) -> np.ndarray:
    gt = np.array([g[0] for g in grid])
    gv = np.array([g[1] for g in grid])
    out = np.interp(ts, gt, gv)
    slope = (gv[-1] - gv[-2]) / (gt[-1] - gt[-2])
    beyond = ts > gt[-1]
    out[beyond] = gv[-1] + slope * (ts[beyond] - gt[-1])
    return out


ONE = SublinearFn("one")
LOG = SublinearFn("log")
SQRT = SublinearFn("sqrt")
SQRT_T_LOG_T = SublinearFn("sqrt_t_log_t")


def power(p: float) -> SublinearFn:
    return SublinearFn("pow", p=p)


def tabulated(points: Sequence[tuple[float, float]], floor: bool = True) -> SublinearFn:
    return SublinearFn("table", grid=tuple((float(t), float(v)) for t, v in points), floor=floor)


def parse_kappa(spec: str) -> SublinearFn:
    """Parse 'one', 'log', 'sqrt', 'sqrt_t_log_t', 'pow:<p>' or 'table:<csv path>'."""
    s = spec.strip()
    simple = {"one": ONE, "log": LOG, "sqrt": SQRT, "sqrt_t_log_t": SQRT_T_LOG_T}
    if s in simple:
        return simple[s]
    if s.startswith("pow:"):
        try:
            p = float(s[4:])
        except ValueError:
            raise ValueError(f"bad exponent in {spec!r}") from None
        return power(p)
    if s.startswith("table:"):
        path = Path(s[6:])
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or set(rows[0]) != {"t", "value"}:
            raise ValueError(f"{path}: expected a CSV with header 't,value'")
        fn = tabulated([(float(r["t"]), float(r["value"])) for r in rows])
        return SublinearFn("table", grid=fn.grid, label=s)
    raise ValueError(
        f"unknown kappa {spec!r}; valid: one, log, sqrt, sqrt_t_log_t, pow:<p>, table:<path>"
    )


def concavify(raw: SublinearFn) -> tuple[SublinearFn, float]:
    """Least concave, non-decreasing majorant of a tabulated function on its grid.

    Returns the envelope together with max(envelope / raw) over the grid.
    """
    if raw.kind != "table":
        raise ValueError("concavify expects a tabulated function")
    pts = [(t, raw(t)) for t, _ in raw.grid]
    hull: list[tuple[float, float]] = []
    for p in pts:
        while len(hull) >= 2 and _cross(hull[-2], hull[-1], p) >= 0:
            hull.pop()
        hull.append(p)
    # flatten once the hull starts to descend
    top = max(range(len(hull)), key=lambda i: hull[i][1])
    hull = hull[: top + 1]
    env = []
    for t, _ in pts:
        if t >= hull[-1][0]:
            env.append((t, hull[-1][1]))
            continue
        i = max(i for i in range(len(hull)) if hull[i][0] <= t)
        (t0, v0), (t1, v1) = hull[i], hull[i + 1]
        env.append((t, v0 + (v1 - v0) * (t - t0) / (t1 - t0)))
    out = SublinearFn("table", grid=tuple(env), floor=raw.floor)
    ratio = max(e / v for (_, e), (_, v) in zip(env, pts))
    return out, ratio


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


U_MIN, U_MAX, U_POINTS = 1e-3, 1e9, 10_000


@lru_cache(maxsize=4096)
def linear_intercept(kappa: SublinearFn, D0: float) -> float:
    """Smallest A with kappa(u) <= u / (2 D0) + A for every u >= 0."""
    if D0 <= 0:
        raise ValueError("D0 must be positive")
    slope = 1.0 / (2.0 * D0)
    u_max = U_MAX
    # the excess kappa(u) - slope*u must be decreasing past the grid end
    while u_max < 1e300:
        tail = (kappa(u_max) - kappa(u_max / 2)) / (u_max / 2)
        if tail < slope:
            break
        u_max *= 1e3
    else:
        raise ValueError(f"{kappa.name} stays above slope {slope:.3g} beyond the floating-point range")
    us = np.concatenate(([0.0], np.geomspace(U_MIN, u_max, U_POINTS)))
    excess = kappa.values(us) - slope * us
    i = int(np.argmax(excess))
    best = float(excess[i])
    lo = us[max(i - 1, 0)]
    hi = us[min(i + 1, len(us) - 1)]
    f = lambda u: kappa(u) - slope * u
    g = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(200):
        if b - a <= 1e-12 * max(1.0, b):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return float(max(best, fc, fd, f(a), f(b)))


def distortion_constants(kappa: SublinearFn, D0: float) -> tuple[float, float]:
    A = linear_intercept(kappa, D0)
    return 1.0 / (2.0 + 2.0 * D0 * A), 1.5 + D0 * A


@dataclass(frozen=True)
class QGConstants:
    q: float
    Q: float

    def __post_init__(self):
        if self.q < 1 or self.Q < 0:
            raise ValueError(f"need q >= 1 and Q >= 0, got ({self.q}, {self.Q})")


@dataclass(frozen=True)
class GaugeConstants:
    c_Z: float
    q: float
    Q: float
    m0: float
    m1: float
    m2: float
    m3: float
    mZ: float
    D0_m2: float
    D0_m3: float
    A_m2: float
    A_m3: float
    kappa: str
    clamped: bool

    def rows(self) -> list[tuple[str, float]]:
        return [
            ("c_Z", self.c_Z), ("q", self.q), ("Q", self.Q),
            ("m0", self.m0), ("m1", self.m1), ("m2", self.m2), ("m3", self.m3),
            ("mZ", self.mZ), ("D0_for_m2", self.D0_m2), ("D0_for_m3", self.D0_m3),
            ("A_for_m2", self.A_m2), ("A_for_m3", self.A_m3),
        ]


def strong_morse_gauge(c_Z: float, q: float, Q: float, kappa: SublinearFn) -> GaugeConstants:
    if c_Z <= 0:
        raise ValueError("contraction constant must be positive")
    QGConstants(q, Q)
    m0 = q * ((q + 1) + q * c_Z + Q)
    m1 = q * c_Z + q + Q
    D0_m2 = 2 * (q * m0 * m1 + Q)
    A2 = linear_intercept(kappa, D0_m2)
    m2 = 1.5 + D0_m2 * A2
    D0_m3 = q * m0 * m1 * (1 + m2) + Q
    A3 = linear_intercept(kappa, D0_m3)
    m3 = 1.5 + D0_m3 * A3
    mZ = (q * m0 * m1 * (1 + m2) + Q + m0) * m3
    floor = max(q, Q)
    return GaugeConstants(
        c_Z, q, Q, m0, m1, m2, m3, max(mZ, floor), D0_m2, D0_m3, A2, A3,
        kappa.name, mZ < floor,
    )


class MorseGauge:
    """The gauge (q, Q) -> m(q, Q) attached to a contraction constant."""

    def __init__(self, c_Z: float, kappa: SublinearFn):
        self.c_Z = c_Z
        self.kappa = kappa
        self._cache: dict[tuple[float, float], GaugeConstants] = {}

    def constants(self, q: float, Q: float) -> GaugeConstants:
        key = (float(q), float(Q))
        if key not in self._cache:
            self._cache[key] = strong_morse_gauge(self.c_Z, q, Q, self.kappa)
        return self._cache[key]

    def __call__(self, q: float, Q: float) -> float:
        return self.constants(q, Q).mZ


def contraction_from_gauge(m_b_32_0: float) -> float:
    if m_b_32_0 <= 0:
        raise ValueError("gauge value must be positive")
    return CONTRACTION_FACTOR * m_b_32_0


def transfer_constants(
    c_b: float, n: float, m_b: Callable[[float, float], float], q: float, Q: float
) -> tuple[float, Callable[[float, float], float]]:
    """Contraction constant of a path in the class, and a bound on its gauge."""
    if c_b < 0 or n < 0:
        raise ValueError("inputs must be non-negative")
    base = 2 * m_b(q, Q)
    return c_b + 13 * n, lambda q2, Q2: m_b(q2, Q2) + base


def small_compared(D: float, r: float, kappa: SublinearFn) -> bool:
    if r <= 0:
        raise ValueError("radius must be positive")
    return D <= r / (2 * kappa(r))
