"""Certified lattice sums for power-law envelopes and kernel convolutions.

Every infinite sum is returned as a partial sum plus a :class:`TailCertificate`
bounding what was discarded.  Tail bounds come from integral comparison over
sup-norm shells, or from the exponentially convergent Bessel representation of
slab sums for the pure power law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft
from scipy import special

from .lattice import Box

DENSE_LIMIT = 1024


@dataclass(frozen=True)
class TailCertificate:
    """Enclosure ``[lower, upper]`` of the part of a sum beyond ``cutoff``."""

    cutoff: float
    partial: float
    lower: float
    upper: float

    @property
    def tail_bound(self) -> float:
        return max(abs(self.lower), abs(self.upper))

    @property
    def enclosure(self) -> tuple[float, float]:
        return self.partial + self.lower, self.partial + self.upper

    def scaled(self, factor: float) -> "TailCertificate":
        lo, hi = sorted((self.lower * factor, self.upper * factor))
        return TailCertificate(self.cutoff, self.partial * factor, lo, hi)


def combine_certificates(certs, cutoff=None) -> TailCertificate:
    certs = list(certs)
    if not certs:
        return TailCertificate(cutoff if cutoff is not None else 0.0, 0.0, 0.0, 0.0)
    return TailCertificate(
        cutoff if cutoff is not None else min(c.cutoff for c in certs),
        math.fsum(c.partial for c in certs),
        math.fsum(c.lower for c in certs),
        math.fsum(c.upper for c in certs),
    )


@dataclass(frozen=True)
class Envelope:
    """Bound ``|f(x)| <= amplitude * |x|^-exponent`` valid for ``x != 0``.

    ``shell_fraction`` is the largest fraction of any sup-norm shell on which
    the summand can be non-zero (e.g. 1/2 for a one-sided sum in d = 1).
    """

    amplitude: float
    exponent: float
    shell_fraction: float = 1.0
    nonnegative: bool = False


def _shell_count_coefficients(d: int) -> list[tuple[int, float]]:
    # (2k+1)^d - (2k-1)^d = 2 * sum_{j odd} C(d, j) (2k)^(d-j)
    return [(d - j, 2.0 * math.comb(d, j) * 2.0 ** (d - j)) for j in range(1, d + 1, 2)]


def shell_count(d: int, k: int) -> int:
    return 1 if k == 0 else (2 * k + 1) ** d - (2 * k - 1) ** d


def shell_tail_bound(d: int, p: float, R: int) -> float:
    """Upper bound on ``sum_{|x|_inf > R} |x|^-p`` over ``Z^d``."""
    if p <= d:
        raise ValueError(f"envelope exponent {p} must exceed the dimension {d}")
    if R < 1:
        return float(shell_count(d, 1)) + shell_tail_bound(d, p, 1)
    # |x| >= |x|_inf = k on shell k, and k^(j-p) is decreasing for j < p
    return math.fsum(c * R ** (j + 1 - p) / (p - j - 1) for j, c in _shell_count_coefficients(d))


def truncated_lattice_sum(summand, d: int, R_cut: int, envelope: Envelope,
                          include_origin: bool = False, chunk: int = 1 << 20):
    """Sum ``summand`` over ``0 < |x|_inf <= R_cut`` and certify the rest.

    ``summand`` maps an integer array of sites ``(m, d)`` to ``m`` reals.
    Returns ``(value, certificate)`` where ``value`` is the partial sum.
    """
    if envelope.exponent <= d:
        raise ValueError(
            f"envelope exponent {envelope.exponent} must exceed the dimension {d}"
        )
    box = Box(d, R_cut)
    sites = box.sites
    if not include_origin:
        sites = sites[box.linf > 0]
    pieces = []
    for start in range(0, len(sites), chunk):
        pieces.append(np.asarray(summand(sites[start:start + chunk]), dtype=np.float64))
    partial = float(np.sum(np.concatenate(pieces))) if pieces else 0.0
    bound = envelope.amplitude * envelope.shell_fraction * shell_tail_bound(
        d, envelope.exponent, R_cut)
    lower = 0.0 if envelope.nonnegative else -bound
    return partial, TailCertificate(R_cut, partial, lower, bound)


# ---------------------------------------------------------------------------
# Pure power law: slab sums and lattice totals


def _bessel_prefactor(D: int, s: float):
    return 2.0 * math.pi ** (s / 2) / math.gamma(s / 2)


def _leading_coefficient(D: int, s: float) -> float:
    return math.pi ** (D / 2) * math.gamma((s - D) / 2) / math.gamma(s / 2)


@lru_cache(maxsize=None)
def _frequency_norms(D: int, K: int):
    """Distinct |k| and multiplicities for k in Z^D, 0 < |k|_inf <= K."""
    box = Box(D, K)
    k2 = (box.sites**2).sum(axis=1)[box.linf > 0]
    vals, counts = np.unique(k2, return_counts=True)
    return np.sqrt(vals.astype(np.float64)), counts.astype(np.float64)


def slab_sum_full(m, D: int, s: float, with_bound: bool = False):
    """``sum_{z in Z^D} (m^2 + |z|^2)^(-s/2)`` for integers ``m >= 1``.

    Uses Poisson summation: a leading ``m^(D-s)`` term plus modified-Bessel
    corrections that decay like ``exp(-2 pi m |k|)``.  ``D = 0`` gives
    ``m^-s``.  With ``with_bound`` also returns a bound on the truncated
    Bessel terms.
    """
    m = np.asarray(m, dtype=np.float64)
    if D == 0:
        out = m ** (-s)
        return (out, np.zeros_like(out)) if with_bound else out
    if s <= D:
        raise ValueError("slab sum diverges for s <= D")
    nu = (s - D) / 2
    lead = _leading_coefficient(D, s) * m ** (D - s)
    mmin = float(np.min(m)) if m.size else 1.0
    K = max(2, int(math.ceil(40.0 / (2 * math.pi * mmin))) + 1)
    norms, mult = _frequency_norms(D, K)
    x = 2 * math.pi * np.multiply.outer(m, norms)
    bessel = np.sum(mult * norms**nu * special.kv(nu, x), axis=-1)
    pref = _bessel_prefactor(D, s) * m ** ((D - s) / 2)
    out = lead + pref * bessel
    if not with_bound:
        return out
    # omitted shells j > K: |k|^nu <= (sqrt(D) j)^nu, K_nu decreasing and
    # e^x K_nu(x) non-increasing, so each further shell gains a factor <= e^(-2 pi m)
    j = K + 1
    first = shell_count(D, j) * (math.sqrt(D) * j) ** nu * special.kv(nu, 2 * math.pi * m * j)
    ratio = np.exp(-2 * math.pi * m) * ((j + 1) / j) ** (D - 1 + nu) * 3.0 ** (D - 1)
    bound = pref * first / np.maximum(1.0 - ratio, 0.5)
    return out, bound


def slab_sum_punctured(m, D: int, s: float):
    """Slab sum over ``Z^D \\ {0}``; for ``D = 0`` the single empty-vector term is kept."""
    if D == 0:
        return np.asarray(m, dtype=np.float64) ** (-s)
    return slab_sum_full(m, D, s) - np.asarray(m, dtype=np.float64) ** (-s)


@lru_cache(maxsize=None)
def _slab_radii(D: int, N: int):
    """Distinct ``|z|^2`` and multiplicities over ``R_N`` (``|z_i| <= N/2``, ``z != 0``)."""
    if D == 0:
        return np.zeros(1), np.ones(1)
    h = N // 2
    box = Box(D, h)
    r2 = (box.sites**2).sum(axis=1)[box.linf > 0]
    vals, counts = np.unique(r2, return_counts=True)
    return vals.astype(np.float64), counts.astype(np.float64)


def slab_sum_finite(m, D: int, s: float, N: int) -> np.ndarray:
    """``sum_{z in R_N} (m^2 + |z|^2)^(-s/2)`` with ``R_N`` the punctured slab."""
    m = np.asarray(m, dtype=np.float64)
    r2, mult = _slab_radii(D, N)
    out = np.empty(m.shape)
    flat = m.reshape(-1)
    res = out.reshape(-1)
    step = max(1, (1 << 22) // max(1, len(r2)))
    for i in range(0, len(flat), step):
        mm = flat[i:i + step]
        res[i:i + step] = ((mm[:, None] ** 2 + r2) ** (-s / 2)) @ mult
    return out


def _power_integral(M: float, r2: np.ndarray, s: float) -> np.ndarray:
    """``int_M^inf (t^2 + r^2)^(-s/2) dt`` for each ``r^2`` (``M > 0``)."""
    r2 = np.asarray(r2, dtype=np.float64)
    out = np.empty_like(r2)
    zero = r2 == 0
    out[zero] = M ** (1 - s) / (s - 1)
    r = np.sqrt(r2[~zero])
    # substitute t = r tan(phi): r^(1-s) * int_{phi0}^{pi/2} cos^(s-2) phi dphi
    x = r**2 / (M**2 + r**2)
    a = (s - 1) / 2
    out[~zero] = r ** (1 - s) * 0.5 * special.beta(a, 0.5) * special.betainc(a, 0.5, x)
    return out


def slab_tail_finite(M: int, D: int, s: float, N: int) -> tuple[float, float]:
    """Enclosure of ``sum_{m > M} sum_{z in R_N} (m^2+|z|^2)^(-s/2)``."""
    r2, mult = _slab_radii(D, N)
    lo = float(mult @ _power_integral(M + 1, r2, s))
    hi = float(mult @ _power_integral(M, r2, s)) if M > 0 else math.inf
    return lo, hi


def slab_tail_full(M: int, D: int, s: float, punctured: bool = False) -> tuple[float, float]:
    """Enclosure of ``sum_{m > M} F(m)`` for the full (or punctured) slab sum ``F``."""
    if D == 0:
        v = float(special.zeta(s, M + 1))
        return v, v
    A = _leading_coefficient(D, s)
    lead = A * float(special.zeta(s - D, M + 1))
    ms = np.arange(M + 1, M + 41, dtype=np.float64)
    full, kbound = slab_sum_full(ms, D, s, with_bound=True)
    bessel = full - A * ms ** (D - s)
    last = max(float(bessel[-1]) + float(kbound[-1]), 0.0)
    q = math.exp(-2 * math.pi)
    rem = last * q / (1 - q) + float(np.sum(kbound))
    total = lead + float(np.sum(bessel))
    if punctured:
        total -= float(special.zeta(s, M + 1))
    return total - rem, total + rem


@lru_cache(maxsize=None)
def power_law_total(d: int, s: float) -> tuple[float, float]:
    """``sum_{w in Z^d, w != 0} |w|^-s`` and an error bound."""
    if s <= d:
        raise ValueError(f"lattice sum diverges for s={s} <= d={d}")
    if d == 1:
        return 2.0 * float(special.zeta(s, 1)), 0.0
    lower, err = power_law_total(d - 1, s)
    lo, hi = slab_tail_full(0, d - 1, s)
    return lower + (lo + hi), err + (hi - lo)


# ---------------------------------------------------------------------------
# Translation-invariant pair operators on a box


class KernelOperator:
    """``f -> g_x = sum_{y != x} K0(y - x) f_y`` for fields on a box.

    Small boxes use a dense matrix; larger ones a zero-padded FFT
    convolution.  Fields have the site axis first, optionally followed by a
    channel axis, with arbitrary leading batch axes before it.
    """

    def __init__(self, box: Box, profile, method: str = "auto"):
        self.box = box
        V = len(box)
        if method == "auto":
            method = "dense" if V <= DENSE_LIMIT else "fft"
        self.method = method
        if method == "dense":
            disp = box.sites[None, :, :] - box.sites[:, None, :]
            mat = np.asarray(profile(disp.reshape(-1, box.d)), dtype=np.float64).reshape(V, V)
            np.fill_diagonal(mat, 0.0)
            self.matrix = mat
        elif method == "fft":
            S = box.side
            P = scipy.fft.next_fast_len(2 * S - 1, real=True)
            self.P = P
            idx = np.indices((P,) * box.d).reshape(box.d, -1)[::-1].T
            disp = np.where(idx >= S, idx - P, idx)  # z with |z_k| <= S-1
            valid = np.all(np.abs(disp) <= S - 1, axis=1) & np.any(disp != 0, axis=1)
            kvals = np.zeros(len(disp))
            # the convolution needs K0(-z) at offset z
            kvals[valid] = profile(-disp[valid])
            kgrid = kvals.reshape((P,) * box.d)
            self.kernel_hat = scipy.fft.rfftn(kgrid)
        else:
            raise ValueError(f"unknown method {method!r}")

    def apply(self, f: np.ndarray, channels: bool = False) -> np.ndarray:
        """Apply to ``f`` of shape ``(..., V)`` or ``(..., V, c)`` with ``channels``."""
        f = np.asarray(f, dtype=np.float64)
        if self.method == "dense":
            # one GEMM with the site axis first
            site = -2 if channels else -1
            g = np.moveaxis(f, site, 0)
            shape = g.shape
            g = (self.matrix @ g.reshape(shape[0], -1)).reshape(shape)
            return np.moveaxis(g, 0, site)
        box, P, d = self.box, self.P, self.box.d
        if channels:
            f = np.moveaxis(f, -1, -2)
        lead = f.shape[:-1]
        grid = f.reshape(lead + box.shape)
        axes = tuple(range(-d, 0))
        fh = scipy.fft.rfftn(grid, s=(P,) * d, axes=axes)
        g = scipy.fft.irfftn(fh * self.kernel_hat, s=(P,) * d, axes=axes)
        g = g[(...,) + (slice(0, box.side),) * d].reshape(lead + (len(box),))
        if channels:
            g = np.moveaxis(g, -2, -1)
        return g

    def quadratic(self, f: np.ndarray, channels: bool = False) -> np.ndarray:
        """``sum_{x != y} K0(y - x) f_x . f_y`` over the box.

        On the FFT path this is evaluated in frequency space (Parseval), which
        needs no inverse transform.  It assumes an even kernel.
        """
        if self.method == "dense":
            g = self.apply(f, channels=channels)
            if channels:
                return np.sum(f * g, axis=(-2, -1))
            return np.sum(f * g, axis=-1)
        f = np.asarray(f, dtype=np.float64)
        box, P, d = self.box, self.P, self.box.d
        if channels:
            f = np.moveaxis(f, -1, -2)
        grid = f.reshape(f.shape[:-1] + box.shape)
        axes = tuple(range(-d, 0))
        fh = scipy.fft.rfftn(grid, s=(P,) * d, axes=axes)
        power = fh.real**2 + fh.imag**2
        out = np.sum(power * self._weighted_hat(), axis=axes) / P**d
        return out.sum(axis=-1) if channels else out

    def _weighted_hat(self):
        # half-spectrum bins other than 0 and the Nyquist bin stand for two
        if getattr(self, "_whole", None) is None:
            w = np.full(self.kernel_hat.shape[-1], 2.0)
            w[0] = 1.0
            if self.P % 2 == 0:
                w[-1] = 1.0
            self._whole = self.kernel_hat.real * w
        return self._whole
