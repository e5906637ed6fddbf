"""Energy defect of a twisted configuration against its uniform bound.

A slab-shaped twist rotates the spins inside Lambda_{L-a} by pi and ramps the
angle down to zero across the annulus.  For random spin configurations the
defect 2H(s) - H(R+ s) - H(R- s) stays far below U = |Phi''| Q+ + lambda Q-,
and the Q- part splits into four pair classes.

    python3 demos/defect_bound.py
"""

import numpy as np

from spinlab import Box, DeformationProfile, ModelSpec
from spinlab.defect import energy_defect_batch, q_minus_parts, q_plus, uniform_bound
from spinlab.spin import random_unit_spin

rng = np.random.default_rng(0)
spec = ModelSpec(d=1, n=3, s=1.5, lam=1.0, J=1.0, potential_name="nn")

print(f"{'L':>5} {'a':>4} {'max|Delta|':>11} {'U':>10} {'Q+':>8}   Q- parts (P1..P4)")
for L, a in [(32, 8), (64, 8), (128, 16), (256, 32)]:
    prof = DeformationProfile(L, a, 1)
    box = Box(1, L + spec.r + 8)
    U, _ = uniform_bound(prof, spec, box.N)
    vals = random_unit_spin(rng, 3, size=2000 * len(box)).reshape(2000, len(box), 3)
    deltas = energy_defect_batch(vals, box, prof, spec)
    parts = q_minus_parts(prof, spec.kernel, box.N).parts
    print(f"{L:5d} {a:4d} {np.abs(deltas).max():11.3f} {U:10.2f} {q_plus(prof, 1):8.3f}   "
          + " ".join(f"{p:9.2f}" for p in parts))

# For comparison, the fully aligned state.
aligned = np.zeros((1, len(box), 3))
aligned[..., 0] = 1.0
print("aligned state, L=256:", float(energy_defect_batch(aligned, box, prof, spec)[0]))
