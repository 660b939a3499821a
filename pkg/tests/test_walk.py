import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from kmorse.rays import contraction_ratio
from kmorse.space import (
    BASEPOINT,
    FlatPoint,
    canonicalize,
    distance,
    gate_to_flat,
    geodesic_segment,
)
from kmorse.walk import (
    UNIFORM6,
    ConfigError,
    WalkConfig,
    drift_estimate,
    excursion_series,
    flat_excursions,
    limit_ray,
    planar_diameter,
    pos_norm,
    position_hash,
    run_ensemble,
    run_walk,
    to_point,
    uniform_tracking,
    write_outputs,
)

# sha256 of the final position, seed 7, trial 0, 1000 steps: frozen from the first run
GOLDEN_1000 = "c3900437c7bb8532ae1360cc9c83b277926f05559044ed2ca5486ee957abed53"


def cfg(support=None, steps=300, **kw):
    kw.setdefault("require_generating", support is None)
    return WalkConfig(dict(support or UNIFORM6), steps=steps, **kw)


def word_length(word):
    """Word length in g1, g2, g3 of the reduced word."""
    v = canonicalize(word)
    return sum(abs(i) + abs(j) + abs(k) for i, j, k in v.flat.syllables) + abs(v.i) + abs(v.j)


class TestConfig:
    def test_errors_listed_together(self):
        with pytest.raises(ConfigError) as err:
            WalkConfig({"g1": 0.5, "g4": 0.7}, steps=0, trials=0)
        msgs = err.value.problems
        assert len(msgs) >= 4
        assert any("steps" in m for m in msgs) and any("trials" in m for m in msgs)

    def test_non_generating(self):
        with pytest.raises(ConfigError, match="g1, g2 and g3"):
            WalkConfig({"g1": 0.5, "g2": 0.5}, steps=10)

    def test_toml(self, tmp_path):
        p = tmp_path / "w.toml"
        p.write_text('steps = 50\ntrials = 2\nseed = 3\ncheckpoints = [10, 50]\n'
                     '[support]\n"g1" = 0.25\n"g2^-1" = 0.25\n"g3" = 0.5\n')
        c = WalkConfig.from_toml(p)
        assert c.checkpoints == [10, 50] and c.trials == 2
        assert c.digest() == WalkConfig.from_toml(p).digest()
        assert c.digest() != WalkConfig.from_toml(p, seed=4).digest()

    def test_default_checkpoints(self):
        assert cfg(steps=10 ** 4).checkpoints == [100, 1000, 10000]
        assert cfg(steps=250).checkpoints == [100, 250]


class TestRun:
    def test_pure_g3(self):
        t = run_walk(cfg({"g3": 1.0}, steps=40), 0)
        for n, pos in enumerate(t.positions):
            assert pos[0].depth == n and pos[1:] == (0, 0)
        assert flat_excursions(t, 40)[0] == 0

    def test_matches_word_reduction(self):
        for support in (UNIFORM6, {"g1 g3": 0.4, "G3 g2^2": 0.3, "g3^-2": 0.3}):
            t = run_walk(cfg(support, steps=400, require_generating=False), 5)
            for n in (0, 17, 200, 400):
                v = canonicalize(t.word(0, n))
                assert to_point(t.positions[n]) == FlatPoint(v.flat, v.i, v.j)

    def test_golden_hash(self):
        t = run_walk(cfg(steps=1000, seed=7), 0)
        assert position_hash(t.positions[-1]) == GOLDEN_1000

    def test_trials_differ(self):
        c = cfg(seed=11)
        assert run_walk(c, 0).choices.tolist() != run_walk(c, 1).choices.tolist()
        assert run_walk(c, 1).choices.tolist() == run_walk(c, 1).choices.tolist()

    def test_norm_exact(self):
        t = run_walk(cfg(steps=500), 2)
        for pos in t.positions[::25]:
            assert pos_norm(pos) == pytest.approx(distance(BASEPOINT, to_point(pos)), abs=1e-9)

    def test_word_vs_cat0(self):
        t = run_walk(cfg(steps=600), 3)
        rng = random.Random(0)
        for _ in range(1000):
            a, b = sorted(rng.sample(range(601), 2))
            d = distance(to_point(t.positions[a]), to_point(t.positions[b]))
            w = word_length(t.word(a, b))
            assert w / math.sqrt(2) - 1e-9 <= d <= w + 1e-9


class TestExcursion:
    def test_brute_force_gates(self):
        t = run_walk(cfg(steps=150), 4)
        pts = [to_point(p) for p in t.positions]
        flats = {p.flat for p in pts}
        best = 0.0
        for Y in flats:
            gates = {(g.x, g.y) for g in (gate_to_flat(p, Y) for p in pts)}
            best = max(best, planar_diameter(gates))
        assert flat_excursions(t, 150)[0] == pytest.approx(best)

    def test_planar_walk(self):
        t = run_walk(cfg({"g1": 0.25, "g1^-1": 0.25, "g2": 0.25, "g2^-1": 0.25}, steps=400), 1)
        visited = [(x, y) for _, x, y in t.positions]
        assert flat_excursions(t, 400)[0] == planar_diameter(visited)
        # direct recomputation over all pairs
        ref = max(math.dist(p, q) for p in set(visited) for q in set(visited))
        assert planar_diameter(visited) == pytest.approx(ref)

    def test_non_decreasing(self):
        t = run_walk(cfg(steps=2000), 6)
        vals = [v for _, v, _ in excursion_series(t, range(1, 2001, 37))]
        assert vals == sorted(vals)

    def test_gate_monotone_after_leaving(self):
        # once the walk leaves a flat's subtree, its gate there is the entry vertex
        t = run_walk(cfg(steps=400), 9)
        pts = [to_point(p) for p in t.positions]
        for Y in {p.flat for p in pts[:100]}:
            if Y.depth == 0:
                continue
            inside = [Y.is_prefix_of(p.flat) for p in pts]
            if not any(inside) or all(inside[inside.index(True):]):
                continue
            last_out = max(k for k in range(len(pts)) if not inside[k] and any(inside[:k]))
            assert (gate_to_flat(pts[last_out], Y).x, gate_to_flat(pts[last_out], Y).y) == (0, 0)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.integers(-6, 6), st.integers(-6, 6)), min_size=1, max_size=40))
    def test_diameter_vs_pairs(self, pts):
        ref = max(math.dist(p, q) for p in pts for q in pts)
        assert planar_diameter(pts) == pytest.approx(ref)


class TestTracking:
    def test_straight_walk(self):
        t = run_walk(cfg({"g1": 1.0}, steps=50), 0)
        assert uniform_tracking(t, 50) == pytest.approx(0.0, abs=1e-9)

    def test_brute_force(self):
        t = run_walk(cfg(steps=200), 8)
        for n in (50, 200):
            g = geodesic_segment(BASEPOINT, to_point(t.positions[n]))
            ref = max(g.nearest(to_point(p))[1] for p in t.positions[:n + 1])
            assert uniform_tracking(t, n) == pytest.approx(ref, abs=1e-9)

    def test_pure_g3_endpoint(self):
        c = cfg({"g3": 1.0}, steps=100, trials=10)
        res = run_ensemble(c)
        assert res.drift == 1.0
        assert all(v == 0.0 for v in res.endpoint.values())
        assert all(u == 0.0 for t in res.trials for _, u in t.uniform)


class TestLimitRay:
    def test_pure_g3(self):
        t = run_walk(cfg({"g3": 1.0}, steps=64), 0)
        est = limit_ray(t)
        # trailing half is g3^32 .. g3^64, whose deepest common flat sits at height 32
        assert not est.unstable and est.stable_length == 32 and est.horizon == 31
        assert est.ray.flat_segments(1000) == []

    def test_planar_is_unstable(self):
        t = run_walk(cfg({"g1": 0.5, "g2": 0.5}, steps=64), 0)
        assert limit_ray(t).unstable

    def test_trailing_half_inside(self):
        t = run_walk(cfg(steps=3000), 3)
        est = limit_ray(t)
        word = " ".join(f"g1^{i} g2^{j} g3^{s}" for i, j, s in est.chain)
        top = canonicalize(word).flat
        assert distance(est.ray.point(est.stable_length), FlatPoint(top, 0, 0)) < 1e-9
        for pos in t.positions[1500:]:
            assert top.is_prefix_of(to_point(pos).flat)
        assert not top.is_prefix_of(to_point(t.positions[est.horizon]).flat)

    def test_rows_are_cut_vertex_distances(self):
        t = run_walk(cfg(steps=3000), 1)
        est = limit_ray(t)
        rows = contraction_ratio(est.ray, _one(), est.stable_length).rows
        ref = [math.hypot(i, j) for i, j, _ in est.chain if (i, j) != (0, 0)]
        assert [b - a for a, b, _ in rows] == pytest.approx(ref)

    def test_extends_with_more_steps(self):
        c = cfg(steps=4000, seed=2)
        short = limit_ray(run_walk(c, 0, steps=2000))
        long_ = limit_ray(run_walk(c, 0, steps=4000))
        assert long_.chain[:len(short.chain)] == short.chain


def _one():
    from kmorse.sublinear import ONE
    return ONE


class TestEnsemble:
    def test_drift(self):
        with pytest.raises(ValueError):
            drift_estimate([1.0] * 5, 10)
        planar = run_ensemble(cfg({"g1": .25, "g1^-1": .25, "g2": .25, "g2^-1": .25}, steps=2000, trials=10))
        full = run_ensemble(cfg(steps=2000, trials=10))
        assert planar.drift < 0.1 < full.drift

    def test_outputs_deterministic(self, tmp_path):
        c = cfg(steps=1000, trials=2, seed=5)
        a = write_outputs(run_ensemble(c), tmp_path / "a")
        b = write_outputs(run_ensemble(c, jobs=2), tmp_path / "b")
        for x, y in zip(a, b):
            assert x.read_bytes() == y.read_bytes()
        lines = (tmp_path / "a" / "excursion.csv").read_text().splitlines()
        assert lines[0] == "trial,n,max_excursion,argmax_flat" and len(lines) == 1 + 2 * 2
