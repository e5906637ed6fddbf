"""Geometry of the hypercubic lattice: boxes, distances and the wedge map."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Box:
    """The box ``[-N, N]^d`` of the integer lattice.

    Sites are enumerated row-major with the lowest coordinate varying
    fastest, so the flat index of ``x`` is ``sum_k (x_k + N) * side**k``.
    """

    d: int
    N: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be positive, got {self.d}")
        if self.N < 0:
            raise ValueError(f"half-side must be non-negative, got {self.N}")

    @property
    def side(self) -> int:
        return 2 * self.N + 1

    @property
    def shape(self) -> tuple[int, ...]:
        # array axis k holds coordinate d-1-k, which makes coordinate 0 fastest
        return (self.side,) * self.d

    def __len__(self) -> int:
        return self.side**self.d

    @cached_property
    def sites(self) -> np.ndarray:
        """All sites as an integer array of shape ``(len(box), d)``."""
        grids = np.indices(self.shape).reshape(self.d, -1)[::-1]
        return np.ascontiguousarray(grids.T - self.N, dtype=np.int64)

    @cached_property
    def linf(self) -> np.ndarray:
        return np.abs(self.sites).max(axis=1)

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(x.shape == (self.d,) and np.abs(x).max() <= self.N)

    def index(self, x) -> int:
        x = np.asarray(x, dtype=np.int64)
        if not self.contains(x):
            raise KeyError(f"site {tuple(x)} not in box of half-side {self.N}")
        return int(np.dot(x + self.N, self.side ** np.arange(self.d)))

    def indices(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64)
        return (xs + self.N) @ (self.side ** np.arange(self.d))

    def grid(self, flat: np.ndarray) -> np.ndarray:
        """Reshape a per-site array (leading axis = sites) onto the box grid."""
        return flat.reshape(self.shape + flat.shape[1:])

    def sub_mask(self, R: int) -> np.ndarray:
        """Boolean mask of the sites lying in ``Lambda_R``."""
        return self.linf <= R


def linf_norm(x) -> int:
    return int(np.abs(np.asarray(x)).max(initial=0))


def linf_dist_to_complement(x, L: int) -> int:
    """l-infinity distance from ``x`` to the complement of ``Lambda_L``."""
    r = linf_norm(x)
    return 0 if r > L else L + 1 - r


def _sign(v):
    # sign(0) := +1
    return np.where(np.asarray(v) >= 0, 1, -1)


def wedge_map(x, y) -> np.ndarray:
    """Fold ``y`` into the coordinate wedge selected by ``x``.

    With ``i`` the first index maximising ``|x_k|`` and ``j`` the first index
    maximising ``|y_k|``, coordinate ``i`` receives ``sign(x_i)|y_j|`` and, when
    ``j != i``, coordinate ``j`` receives ``sign(y_j)|y_i|``.  The image keeps
    ``|y|_inf`` and never increases the Euclidean distance to ``x``.

    The ``j`` coordinate uses ``sign(y_j)`` rather than ``sign(x_i y_j)``: the
    two agree for ``x_i > 0``, and only the former commutes with the global
    reflection ``(x, y) -> (-x, -y)``, which the distance bound relies on.
    """
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if not np.any(x):
        raise ValueError("wedge map is undefined for x = 0")
    return wedge_map_many(x, y[None, :])[0]


def wedge_map_many(x, ys: np.ndarray) -> np.ndarray:
    """Vectorised :func:`wedge_map` for a fixed ``x`` and rows ``ys``."""
    x = np.asarray(x, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    if not np.any(x):
        raise ValueError("wedge map is undefined for x = 0")
    i = int(np.argmax(np.abs(x)))
    sx = int(_sign(x[i]))
    j = np.argmax(np.abs(ys), axis=1)
    rows = np.arange(len(ys))
    yi = ys[:, i]
    yj = ys[rows, j]
    out = ys.copy()
    same = j == i
    out[same, i] = sx * np.abs(yi[same])
    diff = ~same
    out[diff, i] = sx * np.abs(yj[diff])
    out[rows[diff], j[diff]] = _sign(yj[diff]) * np.abs(yi[diff])
    return out


def in_wedge(x, zs: np.ndarray) -> np.ndarray:
    """Membership of rows ``zs`` in the wedge ``{|z_i| = |z|_inf, sign z_i = sign x_i}``."""
    x = np.asarray(x)
    zs = np.atleast_2d(zs)
    i = int(np.argmax(np.abs(x)))
    return (np.abs(zs[:, i]) == np.abs(zs).max(axis=1)) & (_sign(zs[:, i]) == _sign(x[i]))


def preimage_multiplicity_bound(d: int) -> int:
    """Maximal number of preimages of a wedge point under the wedge map."""
    if d < 1:
        raise ValueError("dimension must be positive")
    return 2 * d
