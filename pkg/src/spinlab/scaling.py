"""Benchmark scale, the reduced one-dimensional sums q1..q4 and slope fits."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .latticesums import (
    TailCertificate,
    slab_sum_finite,
    slab_sum_full,
    slab_sum_punctured,
    slab_tail_finite,
    slab_tail_full,
)

_EPS = 1e-12


class Regime(str, enum.Enum):
    SUB = "SUB"      # d < s < d+1
    CRIT1 = "CRIT1"  # s = d+1
    MID = "MID"      # d+1 < s < d+2
    TOP = "TOP"      # s = d+2


def classify_regime(d: int, s: float) -> Regime:
    if not (d < s <= d + 2 + _EPS):
        raise ValueError(f"s={s} outside (d, d+2] for d={d}")
    if abs(s - (d + 1)) <= _EPS:
        return Regime.CRIT1
    if abs(s - (d + 2)) <= _EPS:
        return Regime.TOP
    return Regime.SUB if s < d + 1 else Regime.MID


def benchmark_scale(d: int, s: float, L: float, a: float) -> float:
    """``I_{L,a}``: ``L^(d-1)`` times the regime-dependent factor (natural log)."""
    if d < 1:
        raise ValueError("dimension must be positive")
    regime = classify_regime(d, s)
    if not (L > a >= 2):
        raise ValueError(f"need L > a >= 2, got L={L}, a={a}")
    if regime is Regime.SUB:
        f = L ** (d + 1 - s)
    elif regime is Regime.CRIT1:
        f = math.log(L / a)
    elif regime is Regime.MID:
        f = a ** (d + 1 - s)
    else:
        f = math.log(a) / a
    return L ** (d - 1) * f


# ---------------------------------------------------------------------------
# q sums


def _slab_full(m, d, s):
    return slab_sum_full(m, d - 1, s)


def _slab_R(m, d, s, N):
    """Sum over the punctured slab ``R_N``; ``N=None`` means no side limit.

    In d = 1 the slab is empty and the single unit-weight term ``m^-s`` is used.
    """
    if d == 1:
        return np.asarray(m, dtype=np.float64) ** (-s)
    if N is None:
        return slab_sum_punctured(m, d - 1, s)
    return slab_sum_finite(m, d - 1, s, N)


def _slab_R_tail(M, d, s, N):
    if d == 1:
        v = float(special.zeta(s, M + 1))
        return v, v
    if N is None:
        return slab_tail_full(M, d - 1, s, punctured=True)
    return slab_tail_finite(M, d - 1, s, N)


def _tail_extension(d, N):
    if d == 1 or N is None:
        return 256
    slab = (N // 2 * 2 + 1) ** (d - 1)
    return int(min(4096, max(64, (1 << 24) // slab)))


@dataclass
class ModelSums:
    q1: float
    q2: float
    q3: float
    q4: float
    tails: dict = field(default_factory=dict)
    N: int | None = None


def model_sums(d: int, s: float, L: int, a: int, N: int | None = None) -> ModelSums:
    """Reduced sums ``q1, q2_N, q3_N, q4``; ``N=None`` is the ``N = infinity`` variant.

    All four are rewritten as one-dimensional sums over ``m = u + t`` of the
    slab sums ``F(m) = sum_z (m^2 + |z|^2)^(-s/2)``; the infinite ``m`` tails
    of ``q2`` and ``q4`` are enclosed and their midpoints used.
    """
    if s <= d:
        raise ValueError("need s > d")
    if not (L > a >= 1):
        raise ValueError("need L > a >= 1")
    # q1: 1 <= t <= a, 0 <= u <= L, m = u + t
    m1 = np.arange(1, L + a + 1)
    t = np.arange(1, a + 1)
    w_t = (t / a) ** 2
    cum = np.concatenate([[0.0], np.cumsum(w_t)])
    # t ranges over max(1, m-L) .. min(a, m)
    hi = np.minimum(a, m1)
    lo = np.maximum(1, m1 - L)
    w1 = cum[hi] - cum[lo - 1]
    q1 = float(np.sum(w1 * _slab_full(m1, d, s)))

    # q2: m > a with multiplicity min(L+1, m-a); constant beyond m = a + L + 1.
    # The explicit range runs a little further so the tail enclosure is tight.
    M2 = a + L + 1 + _tail_extension(d, N)
    m2 = np.arange(a + 1, M2 + 1)
    w2 = np.minimum(L + 1, m2 - a).astype(np.float64)
    q2_part = float(np.sum(w2 * _slab_R(m2, d, s, N)))
    lo2, hi2 = _slab_R_tail(M2, d, s, N)
    q2 = q2_part + (L + 1) * 0.5 * (lo2 + hi2)
    cert2 = TailCertificate(M2, q2_part, (L + 1) * lo2, (L + 1) * hi2)

    # q3: k = t - u in 1..a with multiplicity a + 1 - k
    k = np.arange(1, a + 1)
    q3 = float(np.sum((a + 1 - k) * (k / a) ** 2 * _slab_R(k, d, s, N)))

    # q4: m = u + t >= 1, weight sum_{u=1}^{min(a,m)} (u/a)^2; constant for m >= a
    Mc = max(a, 1)
    m4 = np.arange(1, Mc + 1)
    cu = np.cumsum((np.arange(1, a + 1) / a) ** 2)
    w4 = cu[np.minimum(m4, a) - 1]
    q4_part = float(np.sum(w4 * _slab_full(m4, d, s)))
    lo4, hi4 = slab_tail_full(Mc, d - 1, s)
    W = float(cu[-1])
    q4 = q4_part + W * 0.5 * (lo4 + hi4)
    cert4 = TailCertificate(Mc, q4_part, W * lo4, W * hi4)
    return ModelSums(q1, q2, q3, q4, {"q2": cert2, "q4": cert4}, N)


def lattice_sum_ratio(m: int, d: int, s: float, N: int) -> float:
    """Slab sum over ``R_N`` divided by ``m^(d-1-s)``."""
    if s <= d:
        raise ValueError("need s > d")
    if not (1 <= m <= 2 * N):
        raise ValueError(f"need 1 <= m <= 2N, got m={m}, N={N}")
    return float(_slab_R(m, d, s, N)) / m ** (d - 1 - s)


# ---------------------------------------------------------------------------
# Schedules


@dataclass
class DivergenceSchedule:
    pairs: list[tuple[int, int]]
    d: int
    s: float

    def i_values(self) -> list[float]:
        return [benchmark_scale(self.d, self.s, L, a) for L, a in self.pairs]

    def __len__(self):
        return len(self.pairs)


def _covered(d: int, s: float) -> bool:
    if d >= 2:
        return d < s <= d + 2 + _EPS
    return 1 < s <= 2 + _EPS


def divergence_schedule(d: int, s: float, count: int = 6) -> DivergenceSchedule:
    """Dyadic ``(L_k, a_k)`` with ``L/a -> infinity`` and growing ``I``.

    Raises ``ValueError`` when no such schedule exists (d = 1 with s > 2).
    """
    if not _covered(d, s):
        raise ValueError(f"no divergent schedule for d={d}, s={s}")
    regime = classify_regime(d, s)
    power = 2 if regime in (Regime.SUB, Regime.CRIT1) else 3
    sched = DivergenceSchedule([(2 ** (power * k), 2**k) for k in range(1, count + 1)], d, s)
    vals = sched.i_values()
    if not all(b > a for a, b in zip(vals, vals[1:])):
        raise RuntimeError("schedule failed the post-hoc monotonicity check")
    return sched


def bounded_scale_schedule(d: int, s: float, count: int = 6) -> DivergenceSchedule | None:
    """Schedule with ``1 << a << L`` along which ``I`` stays bounded, if one exists.

    In d = 1 and s in [2, 3] this works (``a = L/16`` at s = 2, ``a = sqrt(L)``
    above).  For d = 2, s = 4, ``I >= ln a`` whenever ``a < L``, so no schedule
    with ``a -> infinity`` keeps it bounded and ``None`` is returned.
    """
    if d == 1 and 2 - _EPS <= s <= 3 + _EPS:
        if abs(s - 2) <= _EPS:
            pairs = [(2 ** (k + 4), 2**k) for k in range(2, count + 2)]
        else:
            pairs = [(2 ** (2 * k), 2**k) for k in range(2, count + 2)]
        return DivergenceSchedule(pairs, d, s)
    return None


def fit_loglog_slope(points) -> tuple[float, float, float]:
    """Least squares of ``ln value`` on ``ln scale``: (slope, intercept, rms residual)."""
    pts = np.asarray(list(points), dtype=np.float64)
    if pts.ndim != 2 or len(pts) < 3:
        raise ValueError("need at least three (scale, value) points")
    if np.any(pts <= 0):
        raise ValueError("scales and values must be positive")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(resid**2)))


# ---------------------------------------------------------------------------
# Points


@dataclass
class ScalingPoint:
    d: int
    s: float
    L: int
    a: int
    q1: float
    q2: float
    q3: float
    q4: float
    q2_L: float
    q3_L: float
    i_value: float
    regime: Regime
    q2_tail: float = 0.0
    q4_tail: float = 0.0

    CSV_COLUMNS = ("d", "s", "L", "a", "q1", "q2_inf", "q3_inf", "q4", "q2_L", "q3_L",
                   "I", "regime", "q2_tail", "q4_tail")

    def csv_row(self) -> list:
        return [self.d, self.s, self.L, self.a, self.q1, self.q2, self.q3, self.q4,
                self.q2_L, self.q3_L, self.i_value, self.regime.value,
                self.q2_tail, self.q4_tail]


def scaling_point(d: int, s: float, L: int, a: int) -> ScalingPoint:
    inf = model_sums(d, s, L, a, None)
    fin = model_sums(d, s, L, a, L)
    return ScalingPoint(
        d, s, L, a, inf.q1, inf.q2, inf.q3, inf.q4, fin.q2, fin.q3,
        benchmark_scale(d, s, L, a), classify_regime(d, s),
        0.5 * (inf.tails["q2"].upper - inf.tails["q2"].lower),
        0.5 * (inf.tails["q4"].upper - inf.tails["q4"].lower),
    )
