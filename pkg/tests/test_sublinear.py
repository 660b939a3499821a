import math

import mpmath
import pytest
from hypothesis import given, settings, strategies as st

from kmorse.sublinear import (
    CONTRACTION_SPLIT,
    LOG,
    ONE,
    SQRT,
    SQRT_T_LOG_T,
    MorseGauge,
    concavify,
    contraction_from_gauge,
    distortion_constants,
    linear_intercept,
    parse_kappa,
    power,
    small_compared,
    strong_morse_gauge,
    tabulated,
    transfer_constants,
)

ALL = [ONE, LOG, SQRT, SQRT_T_LOG_T, power(0.3), power(0.75)]


class TestEval:
    def test_examples(self):
        assert ONE(1e6) == 1
        assert SQRT(16) == 4
        ref = float(mpmath.sqrt(mpmath.e * mpmath.log(mpmath.e)))
        assert SQRT_T_LOG_T(math.e) == pytest.approx(ref, abs=1e-12)
        assert SQRT_T_LOG_T(math.e) == pytest.approx(1.6487212707, abs=1e-9)

    def test_negative_t(self):
        with pytest.raises(ValueError):
            SQRT(-1)

    @pytest.mark.parametrize("k", ALL, ids=lambda k: k.name)
    def test_floor_and_monotone(self, k):
        ts = [0, 0.5, 1, 2, math.e, 10, 1e3, 1e6, 1e12]
        vals = [k(t) for t in ts]
        assert min(vals) >= 1
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("k", ALL, ids=lambda k: k.name)
    def test_vector_matches_scalar(self, k):
        ts = [0, 0.1, 1, 3, 77.5, 1e7]
        assert list(k.values(ts)) == pytest.approx([k(t) for t in ts], rel=1e-12)

    @pytest.mark.parametrize("k", ALL, ids=lambda k: k.name)
    def test_concave_above_floor(self, k):
        # clamping creates a kink at e for the log-based kinds, so check past it
        start = {"log": math.e, "sqrt_t_log_t": math.e}.get(k.kind, 1.0)
        ts = [start * 1.3 ** n for n in range(80)]
        for a, b in zip(ts, ts[2:]):
            mid = (a + b) / 2
            assert k(mid) >= (k(a) + k(b)) / 2 - 1e-9

    @pytest.mark.parametrize("k", ALL, ids=lambda k: k.name)
    def test_sublinear_witness(self, k):
        for eps in (0.5, 0.1, 0.01):
            T = next(10.0 ** n for n in range(1, 40) if all(
                k(10.0 ** m) / 10.0 ** m <= eps for m in range(n, n + 8)))
            assert all(k(t) / t <= eps for t in (T * 10 ** m for m in range(12)))

    @settings(max_examples=200, deadline=None)
    @given(st.sampled_from(ALL), st.floats(1.0001, 50), st.floats(1e-6, 1e8))
    def test_concave_scaling(self, k, a, t):
        assert k(a * t) <= a * k(t) * (1 + 1e-12)

    @pytest.mark.parametrize("k", ALL, ids=lambda k: k.name)
    def test_scaling_near_kinks(self, k):
        # dense grid over the clamped region, where a kink can break the scaling bound
        ts = [0.05 * n for n in range(1, 200)]
        for t in ts:
            for a in (1.01, 1.2, 1.5, 2.0, 3.0):
                assert k(a * t) <= a * k(t) * (1 + 1e-12)

    def test_sqrt_t_log_t_below_e(self):
        assert SQRT_T_LOG_T(2.0) == pytest.approx(math.sqrt(2.0), abs=1e-15)
        assert SQRT_T_LOG_T(0.5) == 1.0


class TestTable:
    def test_interp_and_extrapolation(self):
        k = tabulated([(0, 1), (4, 3), (8, 4)])
        assert k(2) == 2
        assert k(12) == 5

    def test_parse_table(self, tmp_path):
        p = tmp_path / "k.csv"
        p.write_text("t,value\n0,1\n10,2\n")
        k = parse_kappa(f"table:{p}")
        assert k(5) == 1.5

    def test_bad_header(self, tmp_path):
        p = tmp_path / "k.csv"
        p.write_text("x,y\n0,1\n10,2\n")
        with pytest.raises(ValueError):
            parse_kappa(f"table:{p}")

    def test_parse_names(self):
        assert parse_kappa("sqrt") == SQRT
        assert parse_kappa("pow:0.5")(9) == 3
        with pytest.raises(ValueError, match="valid"):
            parse_kappa("cube")

    def test_grid_too_small(self):
        with pytest.raises(ValueError):
            tabulated([(0, 1)])


def brute_envelope(pts):
    """sup of lam*k(u) + (1-lam)*k(v) over grid pairs u <= t <= v, then running max."""
    out = []
    for t, _ in pts:
        best = -math.inf
        for u, ku in pts:
            for v, kv in pts:
                if u <= t <= v:
                    lam = 1.0 if v == u else (v - t) / (v - u)
                    best = max(best, lam * ku + (1 - lam) * kv)
        out.append(best)
    for n in range(1, len(out)):
        out[n] = max(out[n], out[n - 1])
    return out


class TestConcavify:
    def test_concave_input_unchanged(self):
        raw = tabulated([(t, math.sqrt(t)) for t in range(1, 101)])
        env, ratio = concavify(raw)
        assert [v for _, v in env.grid] == pytest.approx([v for _, v in raw.grid], abs=1e-9)
        assert ratio == pytest.approx(1.0)

    def test_sawtooth_dominated(self):
        raw = tabulated([(t, math.sqrt(t) + (0.7 if t % 3 == 0 else 0)) for t in range(1, 80)])
        env, ratio = concavify(raw)
        for (t, e), (_, v) in zip(env.grid, raw.grid):
            assert e >= v - 1e-12
            assert e <= ratio * v + 1e-12

    def test_step_input_matches_sup_formula(self):
        pts = [(float(t), float(1 + (t // 5))) for t in range(0, 30)]
        pts[-3] = (pts[-3][0], 2.0)
        raw = tabulated(pts)
        env, _ = concavify(raw)
        ref = brute_envelope([(t, raw(t)) for t, _ in pts])
        assert [v for _, v in env.grid] == pytest.approx(ref, abs=1e-9)
        vals = [v for _, v in env.grid]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
        for a, m, b in zip(vals, vals[1:], vals[2:]):
            assert m >= (a + b) / 2 - 1e-9

    def test_rejects_analytic(self):
        with pytest.raises(ValueError):
            concavify(SQRT)


class TestIntercept:
    def test_sqrt(self):
        assert linear_intercept(SQRT, 2) == pytest.approx(1.0, abs=1e-6)

    def test_one(self):
        assert linear_intercept(ONE, 5) == pytest.approx(1.0, abs=1e-6)

    def test_log(self):
        # grid search: max over u of max(ln u, 1) - u/2
        us = [10 ** (k / 2000) for k in range(-6000, 18000)] + [0.0]
        ref = max(LOG(u) - u / 2 for u in us)
        assert linear_intercept(LOG, 1) == pytest.approx(ref, abs=1e-6)

    def test_sqrt_closed_form_large(self):
        # maximum of sqrt(u) - u/(2 D0) is D0/2
        for D0 in (3.0, 40.0, 1e4):
            assert linear_intercept(SQRT, D0) == pytest.approx(D0 / 2, rel=1e-6)

    def test_bound_holds_on_grid(self):
        for k in ALL:
            A = linear_intercept(k, 7.0)
            for u in [10 ** (n / 10) for n in range(-30, 100)]:
                assert k(u) <= u / 14 + A + 1e-9

    def test_too_steep_table(self):
        with pytest.raises(ValueError):
            linear_intercept(tabulated([(0, 1), (1, 2)]), 5.0)


class TestDistortion:
    def test_examples(self):
        assert distortion_constants(SQRT, 2) == pytest.approx((1 / 6, 7 / 2), abs=1e-9)
        assert distortion_constants(ONE, 5) == pytest.approx((1 / 12, 13 / 2), abs=1e-9)

    @settings(max_examples=1000, deadline=None)
    @given(
        st.sampled_from(ALL),
        st.floats(0.1, 20),
        st.floats(0, 1e6),
        st.floats(-1, 1),
    )
    def test_soundness(self, k, D0, x, u):
        D1, D2 = distortion_constants(k, D0)
        y = max(0.0, x + u * D0 * k(x))
        assert D1 * k(x) <= k(y) * (1 + 1e-12)
        assert k(y) <= D2 * k(x) * (1 + 1e-12)
        assert D1 <= 1 <= D2


def hand_chain(c, q, Q, k):
    m0 = q * ((q + 1) + q * c + Q)
    m1 = q * c + q + Q
    d2 = 2 * (q * m0 * m1 + Q)
    m2 = 3 / 2 + d2 * linear_intercept(k, d2)
    d3 = q * m0 * m1 * (1 + m2) + Q
    m3 = 3 / 2 + d3 * linear_intercept(k, d3)
    return m0, m1, m2, m3, max((q * m0 * m1 * (1 + m2) + Q + m0) * m3, q, Q)


class TestGauge:
    def test_examples(self):
        g = strong_morse_gauge(1, 1, 0, ONE)
        assert (g.m0, g.m1) == (3, 2)
        g = strong_morse_gauge(2, 2, 1, ONE)
        assert (g.m0, g.m1) == (16, 7)

    def test_sqrt_chain(self):
        g = strong_morse_gauge(1, 1, 0, SQRT)
        # A = D0/2 for sqrt, so every link is closed form
        m2 = 1.5 + 12 * 6
        d3 = 6 * (1 + m2)
        m3 = 1.5 + d3 * d3 / 2
        assert g.m2 == pytest.approx(m2, rel=1e-9)
        assert g.m3 == pytest.approx(m3, rel=1e-9)
        assert g.mZ == pytest.approx((d3 + 3) * m3, rel=1e-9)
        assert g.D0_m2 == 12 and g.D0_m3 == pytest.approx(d3)

    @pytest.mark.parametrize("k", [ONE, SQRT, LOG], ids=lambda k: k.name)
    def test_matches_hand_chain(self, k):
        for c, q, Q in [(0.5, 1, 0), (3, 2, 1), (1, 9, 1)]:
            g = strong_morse_gauge(c, q, Q, k)
            ref = hand_chain(c, q, Q, k)
            assert (g.m0, g.m1, g.m2, g.m3, g.mZ) == pytest.approx(ref, rel=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.1, 5), st.floats(1, 4), st.floats(0, 3), st.sampled_from([ONE, SQRT, LOG]))
    def test_monotone(self, c, q, Q, k):
        base = strong_morse_gauge(c, q, Q, k).mZ
        assert strong_morse_gauge(c * 1.5, q, Q, k).mZ >= base
        assert strong_morse_gauge(c, q + 0.5, Q, k).mZ >= base
        assert strong_morse_gauge(c, q, Q + 0.5, k).mZ >= base
        assert base >= max(q, Q)

    def test_domain(self):
        with pytest.raises(ValueError):
            strong_morse_gauge(1, 0.5, 0, ONE)
        with pytest.raises(ValueError):
            strong_morse_gauge(0, 1, 0, ONE)

    def test_gauge_callable_caches(self):
        m = MorseGauge(1.0, ONE)
        assert m(1, 0) == strong_morse_gauge(1, 1, 0, ONE).mZ
        assert m.constants(1, 0) is m.constants(1, 0)


class TestConstants:
    def test_contraction(self):
        assert contraction_from_gauge(1) == 82000
        assert contraction_from_gauge(0.5) == 41000
        assert CONTRACTION_SPLIT[0] * CONTRACTION_SPLIT[1] == 82000

    def test_transfer(self):
        assert transfer_constants(82000, 0, lambda q, Q: 3, 2, 1)[0] == 82000
        c, m = transfer_constants(1, 1, lambda q, Q: 3, 2, 1)
        assert c == 14
        assert m(1, 0) == 9

    def test_small_compared(self):
        assert small_compared(1, 100, ONE)
        assert not small_compared(6, 100, SQRT)
        assert small_compared(5, 100, SQRT)
