"""How the twist cost grows with the box: Q- against the benchmark scale I_{L,a}.

For d = 1 and a = L/16 the exact infinite-lattice Q- is compared with
I_{L,a} in each regime of s; the log-log slope and the ratio Q-/I show
which power (or logarithm) governs the growth.

    python3 demos/scaling_laws.py
"""

from spinlab.defect import q_minus
from spinlab.model import kernel_power_law
from spinlab.scaling import benchmark_scale, classify_regime, fit_loglog_slope, model_sums
from spinlab.spin import DeformationProfile

Ls = [64, 128, 256, 512, 1024]

for s in (1.5, 2.0, 2.5, 3.0):
    k = kernel_power_law(s, 1)
    pts, ratios = [], []
    for L in Ls:
        a = L // 16
        qm, _ = q_minus(DeformationProfile(L, a, 1), k)
        pts.append((L, qm))
        ratios.append(qm / benchmark_scale(1, s, L, a))
    slope = fit_loglog_slope(pts)[0]
    print(f"s={s:3.1f} {classify_regime(1, s).value:5s} slope {slope:+.3f}   "
          f"Q-/I: " + " ".join(f"{r:7.2f}" for r in ratios))

# The reduced sums behind these numbers, at the largest point.
for s in (1.5, 2.5):
    m = model_sums(1, s, 1024, 64)
    print(f"s={s}: q1={m.q1:.4g} q2={m.q2:.4g} q3={m.q3:.4g} q4={m.q4:.4g}")
