import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinlab.scaling import (
    Regime,
    ScalingPoint,
    benchmark_scale,
    bounded_scale_schedule,
    classify_regime,
    divergence_schedule,
    fit_loglog_slope,
    lattice_sum_ratio,
    model_sums,
    scaling_point,
)


def test_benchmark_scale_examples():
    assert benchmark_scale(1, 1.5, 1024, 16) == pytest.approx(32.0)
    assert benchmark_scale(1, 2.0, 1024, 16) == pytest.approx(math.log(64))
    assert benchmark_scale(2, 3.5, 256, 16) == pytest.approx(64.0)
    assert benchmark_scale(2, 4.0, 64, 8) == pytest.approx(64 * math.log(8) / 8)
    with pytest.raises(ValueError):
        benchmark_scale(1, 3.5, 64, 8)
    with pytest.raises(ValueError):
        benchmark_scale(1, 1.5, 8, 8)


def test_classify_regime_examples():
    assert classify_regime(1, 1.5) is Regime.SUB
    assert classify_regime(2, 3) is Regime.CRIT1
    assert classify_regime(1, 3) is Regime.TOP
    assert classify_regime(3, 4.5) is Regime.MID
    for bad in (1.0, 3.01):
        with pytest.raises(ValueError):
            classify_regime(1, bad)


# -- brute force oracles -------------------------------------------------------


def _zgrid(d, zmax, punct=False, N=None):
    if d == 1:
        return np.zeros((1, 0)) if not punct else None
    r = zmax if N is None else N // 2
    ax = np.arange(-r, r + 1)
    g = np.stack(np.meshgrid(*[ax] * (d - 1), indexing="ij"), -1).reshape(-1, d - 1)
    if punct:
        g = g[np.any(g != 0, axis=1)]
    return g


def _F(m, z, s):
    return float(np.sum((m * m + np.sum(z * z, axis=1)) ** (-s / 2)))


def brute_sums(d, s, L, a, N, zmax=400, tmax=4000):
    """Direct quadruple loops from the defining formulas (truncated)."""
    zf = _zgrid(d, zmax)
    zr = _zgrid(d, zmax, punct=True, N=N)

    def Fr(m):
        return m ** (-s) if d == 1 else _F(m, zr, s)

    q1 = sum((t / a) ** 2 * _F(u + t, zf, s) for u in range(L + 1) for t in range(1, a + 1))
    q2 = sum(Fr(u + t) for u in range(L + 1) for t in range(a + 1, tmax))
    q3 = sum(((t - u) / a) ** 2 * Fr(t - u) for u in range(a + 1) for t in range(u + 1, a + 1))
    q4 = sum((u / a) ** 2 * _F(u + t, zf, s) for u in range(1, a + 1) for t in range(0, tmax))
    return q1, q2, q3, q4


def test_model_sums_d1_against_loops():
    d, s, L, a = 1, 2.5, 12, 4
    got = model_sums(d, s, L, a)
    q1, q2, q3, q4 = brute_sums(d, s, L, a, None, tmax=200_000)
    assert got.q1 == pytest.approx(q1, rel=1e-13)
    assert got.q3 == pytest.approx(q3, rel=1e-13)
    assert got.q2 == pytest.approx(q2, rel=1e-6)
    assert got.q4 == pytest.approx(q4, rel=1e-6)
    # degenerate slab: finite N makes no difference
    fin = model_sums(d, s, L, a, L)
    assert (fin.q2, fin.q3) == pytest.approx((got.q2, got.q3), rel=1e-14)


def test_model_sums_d2_against_loops():
    d, s, L, a = 2, 3.5, 6, 3
    fin = model_sums(d, s, L, a, L)
    inf = model_sums(d, s, L, a, None)
    q1, q2, q3, q4 = brute_sums(d, s, L, a, L, zmax=600, tmax=3000)
    assert fin.q3 == pytest.approx(q3, rel=1e-12)
    assert fin.q2 == pytest.approx(q2, rel=1e-4)
    assert inf.q1 == pytest.approx(q1, rel=1e-5)  # z cutoff error ~ zmax^(2-s)
    assert inf.q4 == pytest.approx(q4, rel=1e-3)
    for name in ("q2", "q4"):
        lo, hi = inf.tails[name].enclosure
        assert lo <= getattr(inf, name) <= hi


def test_q3_scaling_stable_d2():
    d, s = 2, 3.5
    vals = [model_sums(d, s, 64, a).q3 / a ** (d + 1 - s) for a in (8, 16, 32)]
    assert max(vals) / min(vals) <= 2.0


def test_q2_finite_vs_infinite_slab():
    for L, a in ((32, 4), (64, 8), (128, 16)):
        fin = model_sums(2, 3.5, L, a, L).q2
        inf = model_sums(2, 3.5, L, a).q2
        assert 1.0 <= inf / fin <= 4.0


def test_lattice_sum_ratio_brackets():
    assert lattice_sum_ratio(7, 1, 2.5, 10) == pytest.approx(1.0)
    r = [lattice_sum_ratio(m, 2, 3.0, 128) for m in range(4, 257)]
    assert max(r) / min(r) <= 8
    r3 = [lattice_sum_ratio(m, 3, 4.0, 32) for m in range(1, 65)]
    assert all(np.isfinite(r3)) and min(r3) > 0
    with pytest.raises(ValueError):
        lattice_sum_ratio(300, 2, 3.0, 128)


# -- schedules and fits --------------------------------------------------------


def test_divergence_schedules():
    sched = divergence_schedule(1, 1.5)
    assert sched.pairs[:2] == [(4, 2), (16, 4)]
    vals = sched.i_values()
    assert np.all(np.diff(vals) > 0)
    top = divergence_schedule(2, 4.0, count=5)
    assert top.pairs[0] == (8, 2)
    assert np.all(np.diff(top.i_values()) > 0)
    with pytest.raises(ValueError):
        divergence_schedule(1, 2.5)


def test_bounded_schedules():
    for s in (2.0, 2.5, 3.0):
        sched = bounded_scale_schedule(1, s)
        vals = sched.i_values()
        assert max(vals) <= 10 * min(vals)
        assert all(L > a for L, a in sched.pairs)
        assert sched.pairs[-1][0] / sched.pairs[-1][1] > sched.pairs[0][0] / sched.pairs[0][1] or s == 2.0
    assert bounded_scale_schedule(2, 4.0) is None
    assert bounded_scale_schedule(1, 1.5) is None


@given(st.floats(-3, 3), st.floats(-5, 5))
def test_fit_recovers_exact_power_law(p, c):
    pts = [(x, math.exp(c) * x**p) for x in (2.0, 4.0, 8.0, 16.0)]
    slope, icpt, rms = fit_loglog_slope(pts)
    assert slope == pytest.approx(p, abs=1e-9)
    assert icpt == pytest.approx(c, abs=1e-8)
    assert rms < 1e-9


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_loglog_slope([(1, 1), (2, 2)])
    with pytest.raises(ValueError):
        fit_loglog_slope([(1, 1), (2, -2), (3, 3)])


def test_q1_and_q4_slopes_in_a():
    d, s = 1, 2.5
    grid = [(16 * a, a) for a in (64, 128, 256, 512)]  # small a is pre-asymptotic
    q1 = [(a, model_sums(d, s, L, a).q1) for L, a in grid]
    q4 = [(a, model_sums(d, s, L, a).q4) for L, a in grid]
    assert fit_loglog_slope(q1)[0] == pytest.approx(d + 1 - s, abs=0.1)
    assert fit_loglog_slope(q4)[0] == pytest.approx(d + 1 - s, abs=0.1)


def test_scaling_point_row():
    p = scaling_point(1, 1.5, 64, 8)
    assert isinstance(p, ScalingPoint)
    row = p.csv_row()
    assert len(row) == len(ScalingPoint.CSV_COLUMNS)
    assert row[11] == "SUB"
    assert p.i_value == pytest.approx(8.0)
