"""Acceptance criteria, one test each, at the stated tolerances."""
import math
import os
import random
import time

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from kmorse.boundary import (
    BoundaryPoint,
    branch_triple,
    check_triple,
    first_divergence,
    neighborhood_radii,
    total_horizon,
    traverses_edge,
)
from kmorse.cli import main as cli_main
from kmorse.rays import (
    ball_projection_diameter,
    contraction_ratio,
    g3_ray,
    random_itinerary,
    straight_ray,
    witness_ball_diameter,
    witness_ray,
    witness_transfer,
)
from kmorse.space import FlatPoint, distance, norm
from kmorse.sublinear import (
    LOG,
    ONE,
    SQRT,
    SQRT_T_LOG_T,
    contraction_from_gauge,
    distortion_constants,
    strong_morse_gauge,
    transfer_constants,
)
from kmorse.walk import UNIFORM6, WalkConfig, run_ensemble
from oracles import grid_dijkstra, random_grid_point

KAPPAS = [ONE, LOG, SQRT, SQRT_T_LOG_T]


# ---------------------------------------------------------------- 1


def test_c1_distance_oracle(verdict_log):
    rng = random.Random(20240601)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        x, y = random_grid_point(rng, 6), random_grid_point(rng, 6)
        worst = max(worst, abs(distance(x, y) - grid_dijkstra(x, y)))
    dt = time.perf_counter() - t0
    ok = worst <= 0.06 and dt < 60
    verdict_log(1, ok, f"200 pairs, max |exact - grid| = {worst:.4f} (<= 0.06), {dt:.1f}s (< 60s)")
    assert ok


# ---------------------------------------------------------------- 2


def intercept_oracle(kappa, D0):
    """Smallest A with kappa(u) <= u/(2 D0) + A, in closed form where one exists."""
    if kappa is ONE:
        return 1.0
    if kappa is SQRT:
        return max(1.0, D0 / 2)  # sqrt(u) - u/(2 D0) peaks at u = D0^2
    if kappa is LOG:
        return max(1.0, math.log(2 * D0) - 1)  # ln u - u/(2 D0) peaks at u = 2 D0
    # sqrt(u ln u) - u/(2 D0): bounded search in log u around the stationary point
    f = lambda s: -(kappa(math.exp(s)) - math.exp(s) / (2 * D0))
    guess = math.log(4 * D0 * D0 * math.log(4 * D0 * D0 + math.e))
    res = minimize_scalar(f, bounds=(guess - 3, guess + 3), method="bounded",
                          options={"xatol": 1e-12})
    return max(1.0, -res.fun)


def hand_chain(c, q, Q, kappa):
    m0 = q * ((q + 1) + q * c + Q)
    m1 = q * c + q + Q
    d2 = 2 * (q * m0 * m1 + Q)
    m2 = 3 / 2 + d2 * intercept_oracle(kappa, d2)
    d3 = q * m0 * m1 * (1 + m2) + Q
    m3 = 3 / 2 + d3 * intercept_oracle(kappa, d3)
    mZ = max((q * m0 * m1 * (1 + m2) + Q + m0) * m3, q, Q)
    return m0, m1, m2, m3, mZ


def test_c2_gauge_formulas(verdict_log):
    rng = random.Random(20240602)
    t0 = time.perf_counter()
    worst = 0.0

    def rel(a, b):
        return abs(a - b) / max(abs(b), 1e-300)

    for n in range(25):
        kappa = KAPPAS[n % 4]
        c, q, Q = rng.uniform(0.5, 5), rng.uniform(1, 4), rng.uniform(0, 3)
        g = strong_morse_gauge(c, q, Q, kappa)
        ref = hand_chain(c, q, Q, kappa)
        worst = max([worst] + [rel(a, b) for a, b in zip((g.m0, g.m1, g.m2, g.m3, g.mZ), ref)])
        m32 = hand_chain(c, 32, 0, kappa)[4]
        c_b = contraction_from_gauge(strong_morse_gauge(c, 32, 0, kappa).mZ)
        worst = max(worst, rel(c_b, 82000 * m32))
        nn = rng.uniform(0, 100)
        c_beta, _ = transfer_constants(c_b, nn, lambda a, b: g.mZ, q, Q)
        worst = max(worst, rel(c_beta, 82000 * m32 + 13 * nn))
        D1, D2 = distortion_constants(kappa, c)
        A = intercept_oracle(kappa, c)
        worst = max(worst, rel(D1, 1 / (2 + 2 * c * A)), rel(D2, 1.5 + c * A))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and dt < 1
    verdict_log(2, ok, f"25 tuples, max relative error {worst:.2e} (<= 1e-9), {dt:.2f}s (< 1s)")
    assert ok


# ---------------------------------------------------------------- 3


def test_c3_strict_inclusion(verdict_log):
    t0 = time.perf_counter()
    ray = witness_ray(SQRT, 14)
    T = total_horizon(ray) + 1
    s_sqrt = contraction_ratio(ray, SQRT, T).sup
    s_log = contraction_ratio(ray, LOG, T).sup
    totals = all(st.total == 2 ** (st.i + 1) for st in ray.stages)
    dt = time.perf_counter() - t0
    ok = s_sqrt <= 4 and s_log >= 10 and totals and dt < 5
    verdict_log(3, ok, f"sup ratio sqrt {s_sqrt:.4g} (<= 4), log {s_log:.4g} (>= 10), "
                       f"|b_i| = 2^(i+1) for all {len(ray.stages)} stages: {totals}, {dt:.2f}s")
    assert ok


# ---------------------------------------------------------------- 4

C4_CONSTANT = 2.0


def projection_verdict(ray, kappa, c, T, rng):
    """Do all witness balls, and sampled balls touching the ray, project within c*kappa(|x|)?"""
    for t1, t2, flat in ray.flat_segments(T):
        diam, nc = witness_ball_diameter(ray, t1, t2)
        if diam > c * kappa(nc) * (1 + 1e-9):
            return False
        x = FlatPoint(flat, rng.uniform(-5, 5), rng.uniform(-5, 5))
        R = ray.project(x, T).d
        if R > 0 and ball_projection_diameter(ray, x, R, 40, T=T, seed=int(t1)) > c * kappa(norm(x)) * (1 + 1e-9):
            return False
    return True


def test_c4_characterization(verdict_log):
    t0 = time.perf_counter()
    c = C4_CONSTANT
    agree = 0
    rows = []
    for n in range(20):
        kappa = KAPPAS[n % 4]
        spiky = n >= 10
        ray = random_itinerary(1000 + n, kappa, 12, bound=c, spikes=2 if spiky else 0)
        T = total_horizon(ray) + 1
        sup = contraction_ratio(ray, kappa, T).sup
        c_up = witness_transfer(kappa, c)
        exc = sup <= c
        exc_transferred = sup <= c_up
        proj = projection_verdict(ray, kappa, c, T, np.random.default_rng(n))
        # excursion at c gives projection at c; projection at c gives excursion at c/D1
        ok = (not exc or proj) and (not proj or exc_transferred)
        agree += ok
        rows.append((kappa.name, spiky, exc, proj))
    dt = time.perf_counter() - t0
    n_pass = sum(p for *_, p in rows)
    ok = agree == 20 and dt < 120
    verdict_log(4, ok, f"{agree}/20 agree (c = {c}, transfer c/D1), {n_pass} pass both, "
                       f"{20 - n_pass} fail both, {dt:.1f}s (< 120s)")
    assert ok


# ---------------------------------------------------------------- 5-7


@pytest.fixture(scope="module")
def ensemble():
    config = WalkConfig(dict(UNIFORM6), steps=10 ** 4, trials=50, seed=1,
                        checkpoints=[100, 1000, 10000])
    t0 = time.perf_counter()
    result = run_ensemble(config, jobs=min(os.cpu_count() or 1, 8))
    return result, time.perf_counter() - t0


def band_ratio(meds):
    return max(meds.values()) / min(meds.values())


def test_c5_log_excursion(verdict_log, ensemble):
    result, dt = ensemble
    meds = result.medians("excursion")
    spread = band_ratio(meds)
    ok = spread <= 3 and dt < 600
    shown = ", ".join(f"n={n}: {v:.4f}" for n, v in meds.items())
    verdict_log(5, ok, f"median max_excursion/ln n {shown}; max/min = {spread:.3f} (<= 3), {dt:.0f}s")
    assert ok


def test_c6_tracking(verdict_log, ensemble):
    result, _ = ensemble
    meds = result.medians("uniform")
    spread = band_ratio(meds)
    ok = spread <= 3
    shown = ", ".join(f"n={n}: {v:.4f}" for n, v in meds.items())
    verdict_log(6, ok, f"median uniform/sqrt(n ln n) {shown}; max/min = {spread:.3f} (<= 3)")
    assert ok


def test_c7_membership(verdict_log, ensemble):
    result, _ = ensemble
    unstable = {t.trial: t.limit["unstable"] for t in result.trials}
    counts, table = {}, {}
    for trial, rows in result.membership.items():
        for name, _, passed in rows:
            counts[name] = counts.get(name, 0) + passed
            key = (name, unstable[trial], passed)
            table[key] = table.get(key, 0) + 1
    # every flagged trial fails, and failure is no rarer among flagged trials
    correlated = True
    for name in counts:
        fs = table.get((name, True, False), 0)
        ps = table.get((name, True, True), 0)
        fo = table.get((name, False, False), 0)
        po = table.get((name, False, True), 0)
        if ps:
            correlated = False
        if fs + ps and fo + po and fs / (fs + ps) < fo / (fo + po):
            correlated = False
    ok = counts["sqrt_t_log_t"] >= 48 and counts["log"] >= 45 and correlated
    cross = "; ".join(
        f"{name}: unstable {table.get((name, True, False), 0)} fail/{table.get((name, True, True), 0)} pass, "
        f"stable {table.get((name, False, False), 0)} fail/{table.get((name, False, True), 0)} pass"
        for name in counts)
    verdict_log(7, ok, f"sqrt_t_log_t {counts['sqrt_t_log_t']}/50 (>= 48), log {counts['log']}/50 (>= 45), "
                       f"constants {result.config.constants}; {cross}")
    assert ok


# ---------------------------------------------------------------- 8

C8_TRIPLES = [
    (ONE, 1.5, 6, "b"), (ONE, 0.5, 6, "b"), (ONE, 3, 9, "c"), (ONE, 1.5, 6, "a"),
    (ONE, 0.25, 0.75, "b"), (ONE, 4, 12, "a"), (ONE, 2, 3, "c"),
    (LOG, 1.5, 6, "b"), (LOG, 3, 9, "c"), (LOG, 0.5, 6, "a"),
]


def test_c8_neighborhood_system(verdict_log):
    r = 1e7
    checks = []
    for n, (kappa, h1, h2, outlier) in enumerate(C8_TRIPLES):
        r_b = neighborhood_radii(BoundaryPoint.certify(g3_ray(), kappa), r).r_b
        rays = branch_triple(int(h1 * r_b), int(h2 * r_b), outlier)
        pts = {k: BoundaryPoint.certify(v, kappa) for k, v in rays.items()}
        checks += check_triple(f"t{n}", pts["a"], pts["b"], pts["c"], r, pairs=50)
    held = {tid for tid in {c.triple_id for c in checks} if all(c.holds for c in checks if c.triple_id == tid)}
    premises = [sum(c.premise for c in checks if c.part == p) for p in (1, 2)]
    ok = len(held) == 10
    verdict_log(8, ok, f"{len(held)}/10 triples hold both parts at r = {r:g}; "
                       f"premises met: part 1 {premises[0]}/10, part 2 {premises[1]}/10")
    assert ok


# ---------------------------------------------------------------- 9


def test_c9_total_disconnectedness(verdict_log):
    t0 = time.perf_counter()
    rng = random.Random(20240609)
    separated = 0
    for n in range(20):
        kappa = KAPPAS[n % 4]
        while True:
            a = random_itinerary(rng.randrange(10 ** 6), kappa, rng.randint(1, 6))
            b = random_itinerary(rng.randrange(10 ** 6), kappa, rng.randint(1, 6))
            if first_divergence(a, b) is not None:
                break
        BoundaryPoint.certify(a, kappa)
        BoundaryPoint.certify(b, kappa)
        d = first_divergence(a, b)
        T = d.crossed_at + 1
        crossed = [traverses_edge(x, d.vertex, d.sign, T) for x in (a, b)]
        separated += crossed[d.owner] and not crossed[1 - d.owner]
    # the straight ray's one segment has ratio T/kappa(0) = T, unbounded in the horizon
    straight_fails = []
    for kappa in KAPPAS:
        sups = [contraction_ratio(straight_ray(), kappa, 10.0 ** e).sup for e in (2, 4, 6)]
        try:
            BoundaryPoint.certify(straight_ray(), kappa)
            refused = False
        except ValueError:
            refused = True
        straight_fails.append(refused and sups[0] < sups[1] < sups[2] and sups[2] >= 1e6)
    dt = time.perf_counter() - t0
    ok = separated == 20 and all(straight_fails) and dt < 10
    verdict_log(9, ok, f"{separated}/20 pairs separated by an edge, straight ray fails for "
                       f"{sum(straight_fails)}/4 kappas, {dt:.1f}s (< 10s)")
    assert ok


# ---------------------------------------------------------------- 10


def test_c10_cli_determinism(verdict_log, tmp_path, capsys):
    cfg = tmp_path / "walk.toml"
    cfg.write_text('steps = 2000\ntrials = 3\nseed = 9\n[support]\n'
                   + "".join(f'"{w}" = {p!r}\n' for w, p in UNIFORM6.items()))
    straight = tmp_path / "straight.ray"
    straight.write_text("flat 0,0 -> 1,0\n")

    def runs(out):
        ray = out / "witness_sqrt_12.ray"
        return [
            ["witness-ray", "--kappa", "sqrt", "--stages", "12"],
            ["check-ray", ray, "--kappa", "sqrt", "--c", "4"],
            ["check-ray", ray, "--kappa", "log", "--c", "4"],
            ["check-ray", straight, "--kappa", "one", "--c", "4"],
            ["gauge", "1", "32", "0", "sqrt"],
            ["neighborhood", ray, ray, "--r", "1e30", "--kappa", "sqrt"],
            ["walk", cfg, "--jobs", "2"],
            ["walk", cfg],
            ["report", out],
        ]

    outs = []
    for tag in ("first", "second"):
        out = tmp_path / tag
        for argv in runs(out):
            cli_main([str(a) for a in argv] + ["--seed", "3", "--out-dir", str(out)])
        outs.append(out)
    capsys.readouterr()
    names = sorted(p.name for p in outs[0].iterdir() if not p.name.endswith(".json"))
    same = [n for n in names if (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes()]
    csvs = [n for n in names if n.endswith(".csv")]
    ok = len(csvs) >= 7 and same == names
    verdict_log(10, ok, f"{len(same)}/{len(names)} output files byte-identical across reruns "
                        f"({len(csvs)} CSVs)")
    assert ok
