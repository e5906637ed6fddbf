"""Spin configurations, plane rotations and deformation profiles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import Box, linf_norm

NORM_TOL = 1e-12


@dataclass
class SpinConfig:
    """Unit vectors in R^n stored on the sites of a box.

    Sites outside ``mask`` carry no spin; they are stored as zero vectors so
    that every pair or bond touching them contributes nothing (free boundary).
    """

    box: Box
    n: int
    values: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"spin dimension must be at least 2, got {self.n}")
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.box), self.n):
            raise ValueError(
                f"values must have shape {(len(self.box), self.n)}, got {self.values.shape}"
            )
        if self.mask is None:
            self.mask = np.ones(len(self.box), dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)
        self.values[~self.mask] = 0.0
        norms = np.linalg.norm(self.values[self.mask], axis=1)
        if norms.size and np.max(np.abs(norms - 1.0)) > NORM_TOL:
            raise ValueError("spins must be unit vectors")

    @property
    def d(self) -> int:
        return self.box.d

    @property
    def M(self) -> int:
        return self.box.N

    @classmethod
    def aligned(cls, box: Box, n: int, direction: int = 0, mask=None) -> "SpinConfig":
        values = np.zeros((len(box), n))
        values[:, direction] = 1.0
        return cls(box, n, values, mask)

    @classmethod
    def uniform(cls, box: Box, n: int, rng: np.random.Generator, mask=None) -> "SpinConfig":
        return cls(box, n, random_unit_spin(rng, n, size=len(box)), mask)

    def spin(self, x) -> np.ndarray:
        return self.values[self.box.index(x)]

    def copy(self) -> "SpinConfig":
        return SpinConfig(self.box, self.n, self.values.copy(), self.mask.copy())

    def renormalize(self) -> None:
        """Project present spins back onto the sphere to contain rounding drift."""
        v = self.values[self.mask]
        self.values[self.mask] = v / np.linalg.norm(v, axis=1, keepdims=True)

    def magnetization(self) -> np.ndarray:
        return self.values[self.mask].mean(axis=0)


def random_unit_spin(rng: np.random.Generator, n: int, size=None) -> np.ndarray:
    """Haar-distributed unit vector(s) in R^n via normalised Gaussians."""
    if n < 2:
        raise ValueError("spin dimension must be at least 2")
    shape = (n,) if size is None else (size, n)
    g = rng.standard_normal(shape)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def rotation_matrix(theta: float, n: int) -> np.ndarray:
    """The plane rotation acting on components (1, 2), identity elsewhere."""
    R = np.eye(n)
    c, s = math.cos(theta), math.sin(theta)
    R[0, 0], R[0, 1] = c, s
    R[1, 0], R[1, 1] = -s, c
    return R


def rotate_plane(values: np.ndarray, angles) -> np.ndarray:
    """Apply ``R^angle`` to each row of ``values`` (last axis = spin components).

    Only components 1 and 2 are touched, which is the same as multiplying by
    :func:`rotation_matrix` but cheaper.
    """
    angles = np.asarray(angles, dtype=np.float64)
    c, s = np.cos(angles), np.sin(angles)
    out = np.array(values, dtype=np.float64, copy=True)
    v1, v2 = values[..., 0], values[..., 1]
    out[..., 0] = c * v1 + s * v2
    out[..., 1] = -s * v1 + c * v2
    return out


def p12_project(v) -> np.ndarray:
    """Orthogonal projection onto the span of the first two basis vectors."""
    out = np.array(v, dtype=np.float64, copy=True)
    out[..., 2:] = 0.0
    return out


@dataclass(frozen=True)
class DeformationProfile:
    """Angle field equal to pi on ``Lambda_{L-a}``, ramping to 0 outside ``Lambda_L``."""

    L: int
    a: int
    d: int

    def __post_init__(self):
        if not (self.L > self.a >= 1):
            raise ValueError(f"need L > a >= 1, got L={self.L}, a={self.a}")
        if self.d < 1:
            raise ValueError("dimension must be positive")

    def theta_of_shell(self, r) -> np.ndarray:
        """Angle as a function of the sup-norm ``r = |x|_inf``."""
        r = np.asarray(r)
        ramp = np.pi * (self.L + 1 - r) / self.a
        return np.where(r <= self.L - self.a, np.pi, np.where(r > self.L, 0.0, ramp))

    def theta(self, x) -> float:
        return float(self.theta_of_shell(linf_norm(x)))

    def on_box(self, box: Box) -> np.ndarray:
        return self.theta_of_shell(box.linf)

    def interior(self, box: Box) -> np.ndarray:
        return box.linf <= self.L - self.a

    def annulus(self, box: Box) -> np.ndarray:
        return (box.linf > self.L - self.a) & (box.linf <= self.L)

    def exterior(self, box: Box) -> np.ndarray:
        return box.linf > self.L


def theta(profile: DeformationProfile, x) -> float:
    return profile.theta(x)


def apply_inhomogeneous_rotation(
    config: SpinConfig, profile: DeformationProfile, branch: int = +1
) -> SpinConfig:
    """Rotate each spin by ``branch * theta_x`` in the (1, 2) plane."""
    if branch not in (+1, -1):
        raise ValueError("branch must be +1 or -1")
    if config.box.N < profile.L:
        raise ValueError(
            f"box half-side {config.box.N} does not contain Lambda_L with L={profile.L}"
        )
    angles = branch * profile.on_box(config.box)
    return SpinConfig(config.box, config.n, rotate_plane(config.values, angles), config.mask)


def write_snapshot_csv(path, config: SpinConfig, seed=None) -> None:
    """Write a configuration as CSV: one row per present site, coordinates then components."""
    d, n = config.d, config.n
    with open(path, "w") as fh:
        fh.write(f"# spinlab-config v1 d={d} n={n} M={config.M} seed={seed}\n")
        cols = [f"x{k}" for k in range(d)] + [f"s{k}" for k in range(n)]
        fh.write(",".join(cols) + "\n")
        for idx in np.flatnonzero(config.mask):
            coords = ",".join(str(int(c)) for c in config.box.sites[idx])
            comps = ",".join(repr(float(v)) for v in config.values[idx])
            fh.write(f"{coords},{comps}\n")


def read_snapshot_csv(path) -> tuple[SpinConfig, int | None]:
    with open(path) as fh:
        header = fh.readline().split()
        if header[:2] != ["#", "spinlab-config"]:
            raise ValueError(f"{path} is not a spinlab configuration snapshot")
        meta = dict(item.split("=", 1) for item in header[3:])
        fh.readline()
        rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    d, n, M = int(meta["d"]), int(meta["n"]), int(meta["M"])
    seed = None if meta["seed"] == "None" else int(meta["seed"])
    box = Box(d, M)
    values = np.zeros((len(box), n))
    mask = np.zeros(len(box), dtype=bool)
    if rows.size:
        idx = box.indices(rows[:, :d].astype(np.int64))
        values[idx] = rows[:, d:]
        mask[idx] = True
    return SpinConfig(box, n, values, mask), seed
