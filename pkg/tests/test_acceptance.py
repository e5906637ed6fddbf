"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` (the lines are also shown
without ``-s``).  Heavy criteria take several minutes on one core.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate, special

from spinlab.cli import main as cli_main
from spinlab.defect import (
    energy_defect_batch,
    pair_defect,
    pair_defect_three_term,
    q_minus,
    q_minus_direct,
    q_minus_parts,
    q_plus,
    uniform_bound,
)
from spinlab.lattice import Box, in_wedge, wedge_map_many
from spinlab.model import ModelSpec, kernel_power_law
from spinlab.montecarlo import (
    ChainState,
    ProductMeasureSpec,
    batch_means,
    defect_distribution,
    defect_tail_check,
    metropolis_sweep,
    product_measure_defect_oracle,
    run_sweeps,
    sample_biased_product,
)
from spinlab.scaling import benchmark_scale, fit_loglog_slope, model_sums
from spinlab.spin import DeformationProfile, SpinConfig, random_unit_spin

ROOT = Path(__file__).resolve().parents[1]

BOUND_GRID = (
    [(1, s, L, a) for s in (1.5, 2.0, 2.5, 3.0) for L, a in ((32, 8), (64, 8), (128, 16))]
    + [(2, s, L, a) for s in (2.5, 3.0, 3.5, 4.0) for L, a in ((16, 4), (32, 8))]
)
MARGIN = {1: 8, 2: 4}


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail, t0):
        with capsys.disabled():
            print(f"\nCRITERION {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}  [{time.time() - t0:.1f}s]")
        assert ok, detail
    return emit


def _grid_setup(d, s, L, a):
    spec = ModelSpec(d=d, n=3, s=s, lam=1.0, J=1.0, potential_name="nn")
    prof = DeformationProfile(L, a, d)
    box = Box(d, L + spec.r + MARGIN[d])
    return spec, prof, box


# ---------------------------------------------------------------------------


def test_criterion_01_pair_identity(report):
    t0 = time.time()
    rng = np.random.default_rng(1)
    n = 3
    sx = random_unit_spin(rng, n, size=100_000)
    sy = random_unit_spin(rng, n, size=100_000)
    tx, ty = rng.uniform(-2 * math.pi, 2 * math.pi, size=(2, 100_000))
    err = float(np.max(np.abs(pair_defect(sx, sy, tx, ty) - pair_defect_three_term(sx, sy, tx, ty))))
    report(1, err <= 1e-12 and time.time() - t0 < 1.0, f"max abs error {err:.2e} on 1e5 inputs", t0)


def test_criterion_02_uniform_bound(report):
    t0 = time.time()
    rng = np.random.default_rng(2)
    worst, violations, total = 0.0, 0, 0
    for d, s, L, a in BOUND_GRID:
        spec, prof, box = _grid_setup(d, s, L, a)
        U, _ = uniform_bound(prof, spec, box.N)
        op = spec.kernel.operator(box)
        V = len(box)
        for start in range(0, 10_000, 250):
            vals = random_unit_spin(rng, 3, size=250 * V).reshape(250, V, 3)
            if start == 0:
                vals[0] = 0.0
                vals[0, :, 0] = 1.0  # aligned
                vals[1] = 0.0
                vals[1, :, 0] = np.where(prof.on_box(box) > math.pi / 2, 1.0, -1.0)
            dl = energy_defect_batch(vals, box, prof, spec, op)
            violations += int(np.sum(np.abs(dl) > U))
            worst = max(worst, float(np.max(np.abs(dl))) / U)
            total += len(dl)
    ok = violations == 0 and time.time() - t0 <= 600
    report(2, ok, f"{violations} violations over {total} configs, max |Delta|/U = {worst:.3f}", t0)


def _wedge_violations(d, R):
    box = Box(d, R)
    ys = box.sites[box.linf > 0].astype(np.int64)
    bad = 0
    for x in ys:
        img = wedge_map_many(x, ys)
        assert img.dtype.kind == "i"
        bad += int(np.sum(np.sum((img - x) ** 2, axis=1) > np.sum((ys - x) ** 2, axis=1)))
        bad += int(np.sum(~in_wedge(x, img)))
        bad += int(np.sum(np.abs(img).max(axis=1) != np.abs(ys).max(axis=1)))
    return bad, len(ys) ** 2


def test_criterion_03_wedge_map(report):
    t0 = time.time()
    res = {d: _wedge_violations(d, 10) for d in (1, 2, 3)}
    bad = sum(v for v, _ in res.values())
    pairs = sum(p for _, p in res.values())
    # sup norm preserved, hence theta preserved for every profile
    prof = DeformationProfile(9, 4, 2)
    ys = Box(2, 10).sites[1:]
    th_ok = np.array_equal(prof.theta_of_shell(np.abs(wedge_map_many((7, -3), ys)).max(axis=1)),
                           prof.theta_of_shell(np.abs(ys).max(axis=1)))
    ok = bad == 0 and th_ok and time.time() - t0 < 60
    report(3, ok, f"{bad} violations over {pairs} pairs (d=1,2,3)", t0)


def test_criterion_04_decomposition(report):
    t0 = time.time()
    worst = 0.0
    for d, s, L, a in BOUND_GRID:
        spec, prof, box = _grid_setup(d, s, L, a)
        parts = q_minus_parts(prof, spec.kernel, box.N)
        direct = q_minus_direct(prof, spec.kernel, box.N)
        worst = max(worst, abs(parts.total - direct) / direct)
    report(4, worst <= 1e-9, f"max relative deviation {worst:.2e} over {len(BOUND_GRID)} points", t0)


def _series(d, s, Ls):
    k = kernel_power_law(s, d)
    out = []
    for L in Ls:
        prof = DeformationProfile(L, L // 16, d)
        qm, _ = q_minus(prof, k)
        out.append((L, L // 16, qm, q_plus(prof, 1)))
    return out


D1_LS = [64, 128, 256, 512, 1024]
D2_LS = [32, 64, 128, 256]


def test_criterion_05_scaling_laws(report):
    t0 = time.time()
    msgs, ok = [], True
    s15 = _series(1, 1.5, D1_LS)
    slope = fit_loglog_slope([(L, q) for L, _, q, _ in s15])[0]
    zero_pot = ModelSpec(d=1, n=2, s=1.5, lam=1.0)
    u_slope = fit_loglog_slope([(L, uniform_bound(DeformationProfile(L, a, 1), zero_pot)[0])
                                for L, a, _, _ in s15])[0]
    ok &= abs(slope - 0.5) <= 0.1 and abs(u_slope - 0.5) <= 0.1
    msgs.append(f"s=1.5 slope {slope:.3f} (U {u_slope:.3f})")
    s25 = _series(1, 2.5, D1_LS)
    slope = fit_loglog_slope([(a, q) for _, a, q, _ in s25])[0]
    ok &= abs(slope + 0.5) <= 0.1
    msgs.append(f"s=2.5 slope vs a {slope:.3f}")
    r2 = [q / math.log(L / a) for L, a, q, _ in _series(1, 2.0, D1_LS)]
    ok &= max(r2) / min(r2) <= 2
    msgs.append(f"s=2 spread x{max(r2) / min(r2):.3f}")
    r3 = [q * a / math.log(a) for L, a, q, _ in _series(1, 3.0, D1_LS)]
    ok &= max(r3) / min(r3) <= 2
    msgs.append(f"s=3 spread x{max(r3) / min(r3):.3f}")
    rd2 = [q / benchmark_scale(2, 3.5, L, a) for L, a, q, _ in _series(2, 3.5, D2_LS)]
    ok &= max(rd2) / min(rd2) <= 4
    msgs.append(f"d=2 s=3.5 Q-/I spread x{max(rd2) / min(rd2):.3f}")
    report(5, ok and time.time() - t0 <= 1800, "; ".join(msgs), t0)


def test_criterion_06_q_plus_bound(report):
    t0 = time.time()
    msgs, ok = [], True
    for d, Ls in ((1, D1_LS), (2, D2_LS)):
        r = [q_plus(DeformationProfile(L, L // 16, d), 1) * (L // 16) / L ** (d - 1) for L in Ls]
        # a single constant bounds the whole series and the series does not drift upward
        ok &= max(r) <= 1.05 * r[0]
        msgs.append(f"d={d}: Q+ a/L^(d-1) in [{min(r):.3f}, {max(r):.3f}]")
    report(6, ok, "; ".join(msgs), t0)


def test_criterion_07_dominance(report):
    t0 = time.time()
    ratios = [qp / qm for _, _, qm, qp in _series(1, 1.5, D1_LS)]
    ok = all(b < a for a, b in zip(ratios, ratios[1:]))
    report(7, ok, "Q+/Q- = " + ", ".join(f"{r:.2e}" for r in ratios), t0)


def test_criterion_08_regime_dominance(report):
    t0 = time.time()
    L, a = 1024, 64
    m = model_sums(1, 1.5, L, a)
    r_sub = m.q2 / max(m.q1, m.q3, m.q4)
    m = model_sums(1, 2.5, L, a)
    r_mid = m.q3 / max(m.q1, m.q2, m.q4)
    detail = (f"s=1.5 q2/max(others) = {r_sub:.3f}; s=2.5 q3/max(others) = {r_mid:.3f} "
              f"(q1={m.q1:.4f} q2={m.q2:.4f} q3={m.q3:.4f} q4={m.q4:.4f})")
    report(8, r_sub >= 2 and r_mid >= 2, detail, t0)


def test_criterion_09_two_spin_oracle(report):
    t0 = time.time()
    num, _ = integrate.quad(lambda p: math.cos(p) * math.exp(math.cos(p)), 0, 2 * math.pi)
    den, _ = integrate.quad(lambda p: math.exp(math.cos(p)), 0, 2 * math.pi)
    oracle = num / den
    assert oracle == pytest.approx(special.iv(1, 1.0) / special.iv(0, 1.0), rel=1e-10)
    spec = ModelSpec(d=1, n=2, lam=0.0, J=1.0, potential_name="nn", beta=1.0)
    st = ChainState(SpinConfig.aligned(Box(1, 1), 2, mask=np.array([False, True, True])), spec, seed=9)
    run_sweeps(st, 200)
    xs = np.empty(40_000)
    for i in range(len(xs)):
        metropolis_sweep(st)
        v = st.config.values
        xs[i] = v[1] @ v[2]
    mean, se = batch_means(xs)
    ok = abs(mean - oracle) <= 0.01 and time.time() - t0 < 60
    report(9, ok, f"E = {mean:.4f} +- {se:.4f}, oracle {oracle:.5f}", t0)


def test_criterion_10_defect_tail(report):
    t0 = time.time()
    spec = ModelSpec(d=1, n=2, s=1.5, lam=1.0, J=1.0, potential_name="nn", beta=0.5, M=128)
    prof = DeformationProfile(32, 8, 1)
    st = ChainState(SpinConfig.aligned(Box(1, 128), 2), spec, seed=10)
    U, _ = uniform_bound(prof, spec, st.box.N)
    deltas = defect_distribution(st, prof, 10_000, every=5, burn_in=2000).delta
    r = defect_tail_check(deltas, spec.beta, U / 4)
    ok = r.passed and len(deltas) >= 10_000 and time.time() - t0 <= 600
    report(10, ok, f"P(Delta >= U/4) = {r.lhs:.4g} +- {r.se:.2g} vs exp(-beta t/2) = {r.rhs:.4g} "
                   f"(U = {U:.1f}, max|Delta| = {np.abs(deltas).max():.2f})", t0)


def test_criterion_11_product_oracle(report):
    t0 = time.time()
    rng = np.random.default_rng(11)
    spec = ModelSpec(d=1, n=2, s=1.5, lam=1.0, J=1.0, potential_name="nn")
    prof = DeformationProfile(64, 8, 1)
    box = Box(1, prof.L + spec.r + 8)
    op = spec.kernel.operator(box)
    ok, msgs = True, []
    for m in (0.0, 0.25, 0.5):
        exact, _ = product_measure_defect_oracle(m, prof, spec, box.N)
        ds = np.concatenate([
            energy_defect_batch(sample_biased_product(ProductMeasureSpec(m), box, 2, rng, batch=1000),
                                box, prof, spec, op) for _ in range(10)])
        se = ds.std(ddof=1) / math.sqrt(len(ds))
        ok &= abs(ds.mean() - exact) <= 3 * se
        msgs.append(f"m*={m}: MC {ds.mean():.4f}+-{se:.4f} vs {exact:.4f}")
    val, _ = product_measure_defect_oracle(0.5, prof, spec, box.N)
    floor = 0.1 * 0.25 * spec.lam * benchmark_scale(1, 1.5, prof.L, prof.a)
    ok &= val > floor
    msgs.append(f"closed form {val:.3f} > {floor:.3f}")
    report(11, ok and time.time() - t0 <= 300, "; ".join(msgs), t0)


SMOKE = {
    "bound-suite": "bound_suite.conf",
    "scaling-grid": "scaling_grid.conf",
    "mc-study": "mc_study.conf",
    "wedge-check": "wedge_check.conf",
    "smoothing-scan": "smoothing_scan.conf",
}


def test_criterion_12_determinism(report, tmp_path):
    t0 = time.time()
    mismatched = []
    for cmd, conf in SMOKE.items():
        outs = []
        for run in ("a", "b"):
            out = tmp_path / run / cmd
            code = cli_main([cmd, "--config", str(ROOT / "configs" / conf), "--out", str(out),
                             "--threads", "1"])
            assert code == 0, f"{cmd} exited {code}"
            outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        if outs[0] != outs[1]:
            mismatched.append(cmd)
    report(12, not mismatched, f"{len(SMOKE)} subcommands, mismatches: {mismatched or 'none'}", t0)
