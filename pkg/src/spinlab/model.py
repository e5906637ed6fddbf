"""Short-range potentials, long-range kernels and the finite-box Hamiltonian."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .lattice import Box
from .latticesums import (
    Envelope,
    KernelOperator,
    TailCertificate,
    power_law_total,
    truncated_lattice_sum,
)
from .spin import SpinConfig, rotate_plane


class BoxTooSmallError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Short-range potentials


class ShortRangePotential:
    """Rotation-invariant finite-range potential ``Phi``.

    ``evaluate`` receives the spins on ``Lambda_r`` (in :class:`Box` site
    order) with absent spins as zero vectors.  ``phi2_norm_bound`` is a
    certified upper bound on the second-derivative norm used by the uniform
    defect bound.
    """

    range: int = 0
    phi2_norm_bound: float = 0.0

    def evaluate(self, patch: np.ndarray) -> float:
        raise NotImplementedError

    @cached_property
    def stencil(self) -> Box:
        return Box(self._d, self.range)

    def total(self, values: np.ndarray, box: Box, N: int) -> np.ndarray:
        """``sum_{x in Lambda_{N+r}} Phi(tau_x sigma)``; batch axes allowed in front."""
        r = self.range
        lead = values.shape[:-2]
        flat = values.reshape((-1,) + values.shape[-2:])
        out = np.zeros(len(flat))
        centres = np.flatnonzero(box.linf <= N + r)
        for b, vals in enumerate(flat):
            out[b] = math.fsum(self.evaluate(self.patch(vals, box, box.sites[c]))
                               for c in centres)
        return out.reshape(lead)

    def patch(self, values: np.ndarray, box: Box, x) -> np.ndarray:
        st = Box(box.d, self.range)
        pts = st.sites + np.asarray(x)
        inside = np.abs(pts).max(axis=1) <= box.N
        out = np.zeros((len(st), values.shape[-1]))
        out[inside] = values[box.indices(pts[inside])]
        return out

    def local_delta(self, values: np.ndarray, box: Box, N: int, idx: int,
                    new_spin: np.ndarray) -> float:
        x = box.sites[idx]
        r = self.range
        centres = [c for c in Box(box.d, r).sites + x if np.abs(c).max() <= N + r]
        new = values.copy()
        new[idx] = new_spin
        return math.fsum(
            self.evaluate(self.patch(new, box, c)) - self.evaluate(self.patch(values, box, c))
            for c in centres
        )


class ZeroPotential(ShortRangePotential):
    range = 0
    phi2_norm_bound = 0.0

    def __init__(self, d: int = 1):
        self._d = d

    def evaluate(self, patch):
        return 0.0

    def total(self, values, box, N):
        return np.zeros(values.shape[:-2])

    def local_delta(self, values, box, N, idx, new_spin):
        return 0.0

    def __repr__(self):
        return "ZeroPotential()"


class NearestNeighbourPotential(ShortRangePotential):
    """``Phi(sigma) = -J sum_i sigma_0 . sigma_{e_i}``: each bond counted once."""

    range = 1

    def __init__(self, J: float, d: int):
        self.J = float(J)
        self._d = d
        # each bond's second variation is at most J (w_x - w_y)^2 <= 2J (w_x^2 + w_y^2)
        self.phi2_norm_bound = 4.0 * d * abs(self.J)

    def __repr__(self):
        return f"NearestNeighbourPotential(J={self.J}, d={self._d})"

    def evaluate(self, patch):
        st = self.stencil
        c = st.index(np.zeros(st.d, dtype=int))
        centre = patch[c]
        total = 0.0
        for k in range(st.d):
            e = np.zeros(st.d, dtype=int)
            e[k] = 1
            total += float(centre @ patch[st.index(e)])
        return -self.J * total

    def total(self, values, box, N):
        d = box.d
        grid = values.reshape(values.shape[:-2] + box.shape + values.shape[-1:])
        base = box.grid(box.linf <= N + 1)
        out = np.zeros(values.shape[:-2])
        nd = grid.ndim
        for k in range(d):
            ax = nd - 2 - k  # coordinate k lives on array axis d-1-k
            lo = [slice(None)] * nd
            hi = [slice(None)] * nd
            lo[ax] = slice(0, -1)
            hi[ax] = slice(1, None)
            dots = np.sum(grid[tuple(lo)] * grid[tuple(hi)], axis=-1)
            bslice = [slice(None)] * d
            bslice[d - 1 - k] = slice(0, -1)
            keep = base[tuple(bslice)]
            out = out + np.sum(np.where(keep, dots, 0.0), axis=tuple(range(-d, 0)))
        return -self.J * out

    def local_delta(self, values, box, N, idx, new_spin):
        x = box.sites[idx]
        diff = np.asarray(new_spin) - values[idx]
        total = 0.0
        for k in range(box.d):
            for step in (+1, -1):
                y = x.copy()
                y[k] += step
                if np.abs(y).max() > box.N:
                    continue
                # the bond belongs to the translate centred at its lower end
                base = x if step == +1 else y
                if np.abs(base).max() > N + 1:
                    continue
                total += float(diff @ values[box.index(y)])
        return -self.J * total


def builtin_nn_potential(J: float, d: int) -> ShortRangePotential:
    if J == 0:
        return ZeroPotential(d)
    return NearestNeighbourPotential(J, d)


def phi2_norm_probe(potential: ShortRangePotential, n: int, trials: int,
                    rng: np.random.Generator, step: float = 1e-3) -> float:
    """Monte Carlo lower estimate of the second-derivative norm of ``Phi``.

    Each trial draws random spins on the stencil and a random unit weight
    vector ``w``, then takes a central second difference of
    ``phi -> Phi(prod_z R_z^{phi w_z} sigma)``.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    if potential.range == 0:
        return 0.0
    st = potential.stencil
    best = 0.0
    for _ in range(trials):
        g = rng.standard_normal((len(st), n))
        sigma = g / np.linalg.norm(g, axis=1, keepdims=True)
        w = rng.standard_normal(len(st))
        w /= np.linalg.norm(w)
        f0 = potential.evaluate(sigma)
        fp = potential.evaluate(rotate_plane(sigma, step * w))
        fm = potential.evaluate(rotate_plane(sigma, -step * w))
        q = (fp - 2 * f0 + fm) / step**2
        if not math.isfinite(q):
            raise FloatingPointError("non-finite second difference: potential not C^2?")
        best = max(best, abs(q))
    return best


# ---------------------------------------------------------------------------
# Long-range kernels


@dataclass(frozen=True)
class LongRangeKernel:
    """Non-negative translation-invariant coupling ``K_xy = K0(y - x)``.

    ``envelope`` must satisfy ``K0(x) <= envelope * |x|^-s`` for all ``x != 0``.
    """

    s: float
    d: int
    profile: object
    envelope: float = 1.0
    name: str = "custom"

    def __call__(self, disp) -> np.ndarray:
        disp = np.atleast_2d(np.asarray(disp))
        return np.asarray(self.profile(disp), dtype=np.float64)

    def operator(self, box: Box, method: str = "auto") -> KernelOperator:
        return KernelOperator(box, self.profile, method)

    def total(self, R_cut: int = 256) -> tuple[float, TailCertificate]:
        """``sum_{w != 0} K0(w)`` with a certificate."""
        if self.name == "power":
            value, err = power_law_total(self.d, self.s)
            return value, TailCertificate(math.inf, value, -err, err)
        env = Envelope(self.envelope, self.s, nonnegative=True)
        return truncated_lattice_sum(self.profile, self.d, R_cut, env)

    def exterior_tail(self, R: int) -> float:
        """Upper bound on ``sum_{|w|_inf > R} K0(w)``."""
        from .latticesums import shell_tail_bound
        return self.envelope * shell_tail_bound(self.d, self.s, R)

    def asymptotic_bracket(self, r_min: float, r_max: float) -> tuple[float, float]:
        """min/max of ``|x|^s K0(x)`` over sites with ``r_min <= |x| <= r_max``."""
        box = Box(self.d, int(math.ceil(r_max)))
        sites = box.sites
        r = np.linalg.norm(sites, axis=1)
        sel = (r >= r_min) & (r <= r_max)
        vals = r[sel] ** self.s * self(sites[sel])
        return float(vals.min()), float(vals.max())


def _power_profile(s):
    def profile(disp):
        r2 = np.sum(np.asarray(disp, dtype=np.float64) ** 2, axis=-1)
        out = np.zeros_like(r2)
        nz = r2 > 0
        out[nz] = r2[nz] ** (-s / 2)
        return out
    return profile


def kernel_power_law(s: float, d: int) -> LongRangeKernel:
    """``K0(x) = |x|^-s`` with the Euclidean norm."""
    if s <= d:
        raise ValueError(f"power-law kernel needs s > d (non-summable for s={s}, d={d})")
    return LongRangeKernel(float(s), d, _power_profile(float(s)), 1.0, "power")


# ---------------------------------------------------------------------------
# Model specification


@dataclass
class ModelSpec:
    """Physical parameters plus the box/truncation knobs of a run."""

    d: int = 1
    n: int = 2
    s: float = 1.5
    lam: float = 1.0
    beta: float = 1.0
    J: float = 0.0
    potential_name: str = "zero"
    M: int = 64
    R_cut: int = 1000
    seed: int = 0
    boundary: str = "free"
    potential: ShortRangePotential = field(default=None, repr=False, compare=False)
    kernel: LongRangeKernel = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("spin dimension must be at least 2")
        if self.lam < 0 or self.beta < 0:
            raise ValueError("lambda and beta must be non-negative")
        if self.boundary != "free":
            raise ValueError("only free boundary conditions are implemented")
        if self.potential is None:
            if self.potential_name == "zero":
                self.potential = ZeroPotential(self.d)
            elif self.potential_name == "nn":
                self.potential = builtin_nn_potential(self.J, self.d)
            else:
                raise ValueError(f"unknown potential {self.potential_name!r}")
        if self.kernel is None:
            self.kernel = kernel_power_law(self.s, self.d)
        if not (self.d < self.s <= self.d + 2 + 1e-12):
            warnings.warn(f"s={self.s} outside (d, d+2]; exploratory run", stacklevel=2)

    @property
    def r(self) -> int:
        return self.potential.range

    _KEYS = {
        "d": ("d", int), "n": ("n", int), "s": ("s", float), "lambda": ("lam", float),
        "beta": ("beta", float), "J": ("J", float), "potential": ("potential_name", str),
        "M": ("M", int), "R_cut": ("R_cut", int), "seed": ("seed", int),
    }

    def to_text(self) -> str:
        lines = []
        for key, (attr, _) in self._KEYS.items():
            lines.append(f"{key} = {getattr(self, attr)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ModelSpec":
        kwargs = {}
        for key, raw in mapping.items():
            if key not in cls._KEYS:
                raise KeyError(f"unknown model key {key!r}")
            attr, conv = cls._KEYS[key]
            kwargs[attr] = conv(raw)
        return cls(**kwargs)

    @classmethod
    def from_text(cls, text: str) -> "ModelSpec":
        return cls.from_mapping(parse_key_values(text))


def parse_key_values(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


# ---------------------------------------------------------------------------
# Energies


def _check_box(box: Box, N: int, r: int):
    if box.N < N + r:
        raise BoxTooSmallError(
            f"box half-side {box.N} does not contain Lambda_(N+r) = Lambda_{N + r}"
        )


def long_range_energy(values: np.ndarray, box: Box, N: int, op: KernelOperator) -> np.ndarray:
    """``sum`` over ordered pairs ``x != y`` meeting ``Lambda_N`` of ``K sigma_x . sigma_y``."""
    total = op.quadratic(values, channels=True)
    if N < box.N:
        outside = values * (box.linf > N)[:, None]
        total = total - op.quadratic(outside, channels=True)
    return total


def hamiltonian_values(values: np.ndarray, box: Box, N: int, spec: ModelSpec,
                       op: KernelOperator | None = None) -> np.ndarray:
    """Energy of a (batch of) raw spin arrays shaped ``(..., V, n)``."""
    _check_box(box, N, spec.r)
    energy = spec.potential.total(values, box, N)
    if spec.lam != 0:
        if op is None:
            op = spec.kernel.operator(box)
        energy = energy + spec.lam * long_range_energy(values, box, N, op)
    return energy


def hamiltonian(config: SpinConfig, N: int, spec: ModelSpec,
                op: KernelOperator | None = None) -> float:
    """Finite-box energy: short-range translates over ``Lambda_{N+r}`` plus
    ``lambda`` times the ordered-pair long-range sum with at least one site in
    ``Lambda_N``.  Pairs leave the box freely (absent spins contribute 0)."""
    return float(hamiltonian_values(config.values, config.box, N, spec, op))


def local_energy_delta(config: SpinConfig, x, new_spin, spec: ModelSpec,
                       N: int | None = None) -> float:
    """Energy change when the spin at ``x`` is replaced by ``new_spin``."""
    box = config.box
    N = box.N - spec.r if N is None else N
    idx = box.index(x)
    new_spin = np.asarray(new_spin, dtype=np.float64)
    values = config.values
    diff = new_spin - values[idx]
    if not np.any(diff):
        return 0.0
    delta = spec.potential.local_delta(values, box, N, idx, new_spin)
    if spec.lam != 0:
        disp = box.sites - box.sites[idx]
        k = spec.kernel(disp)
        k[idx] = 0.0
        if box.linf[idx] > N:
            k = k * (box.linf <= N)
        # ordered pairs (x, y) and (y, x) both carry K
        delta += spec.lam * 2.0 * float(np.sum(k * (values @ diff)))
    return delta
