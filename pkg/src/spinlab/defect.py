"""Energy defect of the inhomogeneous rotations and its deterministic bound.

Pair sums run over ordered pairs ``x != y`` (equivalently each unordered pair
with weight ``K_xy + K_yx``).  The long-range quadratic forms reduce to a few
kernel convolutions on the box:

    sum_{x != y} K (f_x - f_y)^2 = 2 sum_x f_x^2 S(x) - 2 f^T K f,

with ``S(x)`` the kernel mass seen from ``x`` inside the summation window.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import Box
from .latticesums import KernelOperator, TailCertificate, combine_certificates
from .model import (
    BoxTooSmallError,
    LongRangeKernel,
    ModelSpec,
    _check_box,
    hamiltonian_values,
)
from .spin import DeformationProfile, SpinConfig, p12_project, rotate_plane

# ---------------------------------------------------------------------------
# Pair-level quantities


def pair_defect(sigma_x, sigma_y, theta_x, theta_y) -> np.ndarray:
    """Closed form ``4 sin^2((theta_x - theta_y)/2) (sigma_x . P12 sigma_y)``.

    Broadcasts over leading axes of the spin arrays.
    """
    sx = np.asarray(sigma_x, dtype=np.float64)
    sy = np.asarray(sigma_y, dtype=np.float64)
    dot12 = sx[..., 0] * sy[..., 0] + sx[..., 1] * sy[..., 1]
    half = 0.5 * (np.asarray(theta_x) - np.asarray(theta_y))
    return 4.0 * np.sin(half) ** 2 * dot12


def pair_defect_three_term(sigma_x, sigma_y, theta_x, theta_y) -> np.ndarray:
    """``2 s_x.s_y - (R+ s)_x.(R+ s)_y - (R- s)_x.(R- s)_y`` evaluated literally."""
    sx = np.asarray(sigma_x, dtype=np.float64)
    sy = np.asarray(sigma_y, dtype=np.float64)
    tx, ty = np.asarray(theta_x), np.asarray(theta_y)
    plus = np.sum(rotate_plane(sx, tx) * rotate_plane(sy, ty), axis=-1)
    minus = np.sum(rotate_plane(sx, -tx) * rotate_plane(sy, -ty), axis=-1)
    return 2.0 * np.sum(sx * sy, axis=-1) - plus - minus


def ktilde(kernel: LongRangeKernel, theta_x, theta_y, displacement) -> np.ndarray:
    """Effective coupling ``4 sin^2((theta_x - theta_y)/2) K0(displacement)``."""
    disp = np.atleast_2d(np.asarray(displacement))
    if np.any(np.all(disp == 0, axis=-1)):
        raise ValueError("displacement must be non-zero")
    k = kernel(disp)
    half = 0.5 * (np.asarray(theta_x) - np.asarray(theta_y))
    out = 4.0 * np.sin(half) ** 2 * k
    return out if np.ndim(displacement) > 1 else out.reshape(np.shape(half))


class PairClass(enum.Enum):
    P1 = "P1"  # interior x annulus
    P2 = "P2"  # interior x exterior
    P3 = "P3"  # annulus x annulus, different shells
    P4 = "P4"  # annulus x exterior
    NULL = "Null"


def _region(profile: DeformationProfile, r: int) -> int:
    # 0 interior, 1 annulus, 2 exterior
    if r <= profile.L - profile.a:
        return 0
    return 1 if r <= profile.L else 2


def classify_pair(x, y, profile: DeformationProfile) -> PairClass:
    """Class of the unordered pair ``{x, y}``; the pair is oriented inward first."""
    rx, ry = int(np.abs(x).max()), int(np.abs(y).max())
    if rx > ry:
        rx, ry = ry, rx
    gx, gy = _region(profile, rx), _region(profile, ry)
    table = {(0, 1): PairClass.P1, (0, 2): PairClass.P2, (1, 2): PairClass.P4}
    if (gx, gy) in table:
        return table[(gx, gy)]
    if gx == gy == 1 and rx < ry:
        return PairClass.P3
    return PairClass.NULL


# ---------------------------------------------------------------------------
# Energy defect


def _resolve_N(box: Box, profile: DeformationProfile, spec: ModelSpec, N):
    if N is None:
        N = box.N - spec.r
    if N < profile.L:
        raise BoxTooSmallError(f"nominal N={N} must be at least L={profile.L}")
    _check_box(box, N, spec.r)
    return N


def energy_defect(config: SpinConfig, profile: DeformationProfile, spec: ModelSpec,
                  N: int | None = None, op: KernelOperator | None = None) -> float:
    """``2 H_N(sigma) - H_N(R+ sigma) - H_N(R- sigma)`` from three Hamiltonian evaluations."""
    box = config.box
    N = _resolve_N(box, profile, spec, N)
    angles = profile.on_box(box)
    stack = np.stack([config.values,
                      rotate_plane(config.values, angles),
                      rotate_plane(config.values, -angles)])
    if op is None and spec.lam != 0:
        op = spec.kernel.operator(box)
    e0, ep, em = hamiltonian_values(stack, box, N, spec, op)
    return float(2.0 * e0 - ep - em)


def energy_defect_batch(values: np.ndarray, box: Box, profile: DeformationProfile,
                        spec: ModelSpec, op: KernelOperator | None = None,
                        N: int | None = None) -> np.ndarray:
    """Defects of a batch ``(B, V, n)`` via the pair identity.

    The long-range part is ``lambda sum K~ u_x . u_y`` with ``u = P12 sigma``,
    expanded as ``2 Q(u) - 2 Q(cos(theta) u) - 2 Q(sin(theta) u)``; the
    short-range part is evaluated directly on the rotated spins.
    """
    N = _resolve_N(box, profile, spec, N)
    values = np.asarray(values, dtype=np.float64)
    angles = profile.on_box(box)
    out = np.zeros(values.shape[:-2])
    if spec.r > 0:
        pot = spec.potential
        out += 2.0 * pot.total(values, box, N)
        out -= pot.total(rotate_plane(values, angles), box, N)
        out -= pot.total(rotate_plane(values, -angles), box, N)
    if spec.lam != 0:
        if op is None:
            op = spec.kernel.operator(box)
        u = values[..., :2]
        c = np.cos(angles)[:, None]
        s = np.sin(angles)[:, None]
        stacked = np.stack([u, c * u, s * u], axis=-3)  # (..., 3, V, 2)
        q = op.quadratic(stacked, channels=True)
        out += spec.lam * 2.0 * (q[..., 0] - q[..., 1] - q[..., 2])
    return out


def long_range_defect_direct(config: SpinConfig, profile: DeformationProfile,
                             kernel: LongRangeKernel) -> float:
    """Explicit double loop of ``sum_{x != y} K_xy Delta_xy`` over the box (oracle, small boxes)."""
    box = config.box
    th = profile.on_box(box)
    vals = config.values
    total = 0.0
    for i in range(len(box)):
        disp = box.sites - box.sites[i]
        k = kernel(disp)
        k[i] = 0.0
        total += float(np.sum(k * pair_defect(vals[i], vals, th[i], th)))
    return total


# ---------------------------------------------------------------------------
# Q+ and Q-


def q_plus(profile: DeformationProfile, r: int) -> float:
    """``sum_x sum_{y in Lambda_r} (theta_{x+y} - theta_x)^2`` (finite, exact)."""
    if r < 1:
        raise ValueError("range must be at least 1")
    d = profile.d
    box = Box(d, profile.L + r)
    th = profile.on_box(box)
    total = []
    for off in Box(d, r).sites:
        if not np.any(off):
            continue
        shifted = np.abs(box.sites + off).max(axis=1)
        total.append(np.sum((profile.theta_of_shell(shifted) - th) ** 2))
    return float(np.sum(total))


@dataclass
class QMinusParts:
    """``Q1..Q4`` with certificates on the exterior parts ``Q2`` and ``Q4``."""

    parts: tuple[float, float, float, float]
    tails: tuple[TailCertificate, TailCertificate]
    window: float  # R of the summation window, inf for the full lattice

    @property
    def total(self) -> float:
        return math.fsum(self.parts)

    @property
    def certificate(self) -> TailCertificate:
        return combine_certificates(self.tails, cutoff=self.window)


class _ProfileSums:
    """Kernel masses and profile quadratic forms shared by the Q- routines."""

    def __init__(self, profile: DeformationProfile, kernel: LongRangeKernel):
        self.profile = profile
        self.kernel = kernel
        self.box = Box(profile.d, profile.L)
        self.op = kernel.operator(self.box)
        self.theta = profile.on_box(self.box)
        self.inner = self.op.apply(np.ones(len(self.box)))

    def window_mass(self, R: int) -> np.ndarray:
        """``sum_{y in Lambda_R, y != x} K(y - x)`` for ``x in Lambda_L``."""
        L = self.profile.L
        if R == L:
            return self.inner
        big = Box(self.profile.d, R)
        op = self.kernel.operator(big)
        mass = op.apply(np.ones(len(big)))
        return mass[big.linf <= L]


def q_minus_parts(profile: DeformationProfile, kernel: LongRangeKernel,
                  R_cut: int | None = None) -> QMinusParts:
    """Split ``Q-`` into the four pair classes.

    ``R_cut`` gives the summation window ``Lambda_R`` (pairs with both ends
    inside); ``None`` sums over the whole lattice using the certified kernel
    total.  The certificates bound the exterior mass beyond the window.
    """
    ps = _ProfileSums(profile, kernel)
    box, th, inner = ps.box, ps.theta, ps.inner
    L = profile.L
    interior = profile.interior(box)
    annulus = profile.annulus(box)
    if R_cut is None:
        total, cert = kernel.total()
        ext = total - inner
        err = cert.tail_bound
        window = math.inf
    else:
        if R_cut < L:
            raise ValueError(f"window R={R_cut} must contain Lambda_L (L={L})")
        ext = ps.window_mass(R_cut) - inner
        err = kernel.exterior_tail(R_cut - L) if R_cut > L else kernel.exterior_tail(0)
        window = float(R_cut)
    pi2 = math.pi**2
    gap = np.where(annulus, (math.pi - th) ** 2, 0.0)
    q1 = 2.0 * float(np.sum(np.where(interior, ps.op.apply(gap), 0.0)))
    q2 = 2.0 * pi2 * float(np.sum(ext[interior]))
    ta = np.where(annulus, th, 0.0)
    mass_a = ps.op.apply(annulus.astype(np.float64))
    q3 = 2.0 * float(np.sum(ta**2 * mass_a)) - 2.0 * float(np.sum(ta * ps.op.apply(ta)))
    q4 = 2.0 * float(np.sum(ta**2 * ext))
    w2 = 2.0 * pi2 * int(interior.sum())
    w4 = 2.0 * float(np.sum(ta**2))
    lower = 0.0 if R_cut is not None else -1.0
    tails = (
        TailCertificate(window, q2, lower * w2 * err, w2 * err),
        TailCertificate(window, q4, lower * w4 * err, w4 * err),
    )
    return QMinusParts((q1, q2, max(q3, 0.0), q4), tails, window)


def q_minus(profile: DeformationProfile, kernel: LongRangeKernel,
            R_cut: int | None = None) -> tuple[float, TailCertificate]:
    """``sum_{x != y} K_xy (theta_x - theta_y)^2`` in one pass (same window rules)."""
    ps = _ProfileSums(profile, kernel)
    th = ps.theta
    if R_cut is None:
        total, cert = kernel.total()
        mass = np.full(len(ps.box), total)
        err = cert.tail_bound
        lower = -1.0
    else:
        if R_cut < profile.L:
            raise ValueError("window must contain Lambda_L")
        mass = ps.window_mass(R_cut)
        err = kernel.exterior_tail(R_cut - profile.L)
        lower = 0.0
    value = 2.0 * float(np.sum(th**2 * mass)) - 2.0 * float(np.sum(th * ps.op.apply(th)))
    w = 2.0 * float(np.sum(th**2))
    return value, TailCertificate(R_cut if R_cut is not None else math.inf,
                                  value, lower * w * err, w * err)


def q_minus_direct(profile: DeformationProfile, kernel: LongRangeKernel, R: int,
                   chunk: int = 1 << 22) -> float:
    """Brute-force ``Q-`` over ordered pairs in ``Lambda_R`` (independent oracle)."""
    d, L = profile.d, profile.L
    inner = Box(d, L)
    outer = Box(d, R)
    xs = inner.sites
    tx = profile.on_box(inner)
    ys = outer.sites
    ty = profile.on_box(outer)
    step = max(1, chunk // len(ys))
    parts = []
    # pairs with x in Lambda_L (y anywhere in the window) ...
    for i in range(0, len(xs), step):
        disp = ys[None, :, :] - xs[i:i + step, None, :]
        k = kernel(disp.reshape(-1, d)).reshape(disp.shape[:2])
        parts.append(np.sum(k * (tx[i:i + step, None] - ty[None, :]) ** 2))
    # ... plus pairs with x outside Lambda_L and y inside
    out_sites = ys[outer.linf > L]
    for i in range(0, len(out_sites), step):
        disp = xs[None, :, :] - out_sites[i:i + step, None, :]
        k = kernel(disp.reshape(-1, d)).reshape(disp.shape[:2])
        parts.append(np.sum(k * tx[None, :] ** 2))
    return float(np.sum(parts))


def uniform_bound(profile: DeformationProfile, spec: ModelSpec,
                  R_cut: int | None = None) -> tuple[float, TailCertificate]:
    """``||Phi''|| Q+ + |lambda| Q-`` with the certificate of the ``Q-`` part."""
    value = 0.0
    if spec.r > 0 and spec.potential.phi2_norm_bound > 0:
        value += spec.potential.phi2_norm_bound * q_plus(profile, spec.r)
    if spec.lam == 0:
        return value, TailCertificate(R_cut if R_cut is not None else math.inf, 0.0, 0.0, 0.0)
    qm, cert = q_minus(profile, spec.kernel, R_cut)
    lam = abs(spec.lam)
    return value + lam * qm, cert.scaled(lam)


# ---------------------------------------------------------------------------
# Block smoothing


def _block_indices(box: Box, centre, ell: int) -> np.ndarray:
    centre = np.asarray(centre, dtype=np.int64)
    block = Box(box.d, ell).sites + centre
    if np.abs(block).max() > box.N:
        raise ValueError("block leaves the configuration box")
    return box.indices(block)


def block_magnetization(config: SpinConfig, centre, ell: int) -> np.ndarray:
    """Average of ``P12 sigma`` over ``centre + Lambda_ell``; returns the two plane components."""
    idx = _block_indices(config.box, centre, ell)
    return p12_project(config.values[idx]).mean(axis=0)[:2]


def smoothing_check(config: SpinConfig, centre1, centre2, ell: int,
                    profile: DeformationProfile, kernel: LongRangeKernel) -> tuple[float, float]:
    """Return ``|sum K Delta_xy - m1.m2 sum K~|`` over the two blocks and ``sum K~``."""
    box = config.box
    i1 = _block_indices(box, centre1, ell)
    i2 = _block_indices(box, centre2, ell)
    if np.intersect1d(i1, i2).size:
        raise ValueError("blocks overlap")
    th = profile.on_box(box)
    x, y = box.sites[i1], box.sites[i2]
    disp = (y[None, :, :] - x[:, None, :]).reshape(-1, box.d)
    k = kernel(disp).reshape(len(i1), len(i2))
    sx, sy = config.values[i1], config.values[i2]
    d_xy = pair_defect(sx[:, None, :], sy[None, :, :], th[i1][:, None], th[i2][None, :])
    kt = 4.0 * np.sin(0.5 * (th[i1][:, None] - th[i2][None, :])) ** 2 * k
    m1 = block_magnetization(config, centre1, ell)
    m2 = block_magnetization(config, centre2, ell)
    rhs = float(np.sum(kt))
    lhs = abs(float(np.sum(k * d_xy)) - float(m1 @ m2) * rhs)
    return lhs, rhs


# ---------------------------------------------------------------------------
# Reports


@dataclass
class DefectReport:
    delta: float
    u_bound: float
    q_plus: float
    q_minus_parts: tuple[float, float, float, float]
    q_minus: float
    tails: list[TailCertificate] = field(default_factory=list)
    L: int = 0
    a: int = 0
    spec: ModelSpec | None = None

    @property
    def slack(self) -> float:
        return math.fsum(t.upper for t in self.tails) * abs(self.spec.lam if self.spec else 1.0)

    def within_bound(self) -> bool:
        return abs(self.delta) <= self.u_bound + self.slack

    CSV_COLUMNS = ("d", "n", "s", "lambda", "L", "a", "delta", "u_bound", "q_plus",
                   "q1", "q2", "q3", "q4", "q_minus", "tail_q2", "tail_q4")

    def csv_row(self) -> list:
        sp = self.spec
        tails = [t.tail_bound for t in self.tails] + [0.0, 0.0]
        return [sp.d, sp.n, sp.s, sp.lam, self.L, self.a, self.delta, self.u_bound,
                self.q_plus, *self.q_minus_parts, self.q_minus, tails[0], tails[1]]


def defect_report(config: SpinConfig, profile: DeformationProfile, spec: ModelSpec,
                  R_cut: int | None = None) -> DefectReport:
    """Defect, bound and ``Q-`` decomposition on a common window (the config box by default)."""
    R = config.box.N if R_cut is None else R_cut
    delta = energy_defect(config, profile, spec)
    u, _ = uniform_bound(profile, spec, R)
    parts = q_minus_parts(profile, spec.kernel, R)
    qp = q_plus(profile, spec.r) if spec.r > 0 else 0.0
    return DefectReport(delta, u, qp, parts.parts, parts.total, list(parts.tails),
                        profile.L, profile.a, spec)


def ktilde_total(profile: DeformationProfile, kernel: LongRangeKernel,
                 R_cut: int | None = None) -> tuple[float, TailCertificate]:
    """``sum_{x != y} K~_xy`` over ordered pairs (window ``Lambda_R`` or the lattice).

    Uses ``4 sin^2((t_x - t_y)/2) = |g_x - g_y|^2`` with ``g = (cos t - 1, sin t)``,
    which vanishes off ``Lambda_L``.
    """
    ps = _ProfileSums(profile, kernel)
    th = ps.theta
    g = np.stack([np.cos(th) - 1.0, np.sin(th)], axis=-1)
    g2 = np.sum(g**2, axis=-1)
    if R_cut is None:
        total, cert = kernel.total()
        mass = np.full(len(ps.box), total)
        err, lower = cert.tail_bound, -1.0
    else:
        if R_cut < profile.L:
            raise ValueError("window must contain Lambda_L")
        mass = ps.window_mass(R_cut)
        err, lower = kernel.exterior_tail(R_cut - profile.L), 0.0
    value = 2.0 * float(np.sum(g2 * mass)) - 2.0 * float(ps.op.quadratic(g, channels=True))
    w = 2.0 * float(np.sum(g2))
    return value, TailCertificate(R_cut if R_cut is not None else math.inf,
                                  value, lower * w * err, w * err)


def nn_bond_defect_weight(profile: DeformationProfile) -> float:
    """``sum`` over nearest-neighbour bonds of ``4 sin^2((t_x - t_y)/2)``."""
    box = Box(profile.d, profile.L + 1)
    th = box.grid(profile.on_box(box))
    total = 0.0
    for ax in range(profile.d):
        diff = np.diff(th, axis=ax)
        total += float(np.sum(4.0 * np.sin(0.5 * diff) ** 2))
    return total
