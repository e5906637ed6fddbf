"""Metropolis sampling of the free-boundary finite-volume Gibbs measure.

A chain keeps the long-range local field ``h = C sigma`` (with ``C`` the
dense symmetric coupling matrix ``2 lambda K`` restricted to pairs meeting
``Lambda_N``) and updates it after every accepted move, so a sweep costs
``O(V^2 n)``.  Randomness comes from a counter-based Philox stream keyed by
``(seed, stream)``; one block of draws is taken per sweep, which makes a
resumed chain reproduce an uninterrupted one bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .defect import energy_defect_batch, ktilde_total, nn_bond_defect_weight
from .lattice import Box
from .model import ModelSpec, NearestNeighbourPotential, ZeroPotential, hamiltonian_values
from .spin import DeformationProfile, SpinConfig, random_unit_spin

SNAPSHOT_VERSION = 1
DENSE_COUPLING_LIMIT = 6000
REFRESH_EVERY = 1000


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream,))))


@numba.njit(cache=True, nogil=True)
def _sweep_kernel(values, field, C, nbr, J, beta, proposals, uniforms, present):
    V, n = values.shape
    accepted = 0
    dE_total = 0.0
    diff = np.empty(n)
    for i in range(V):
        if not present[i]:
            continue
        dE = 0.0
        for c in range(n):
            diff[c] = proposals[i, c] - values[i, c]
            dE += diff[c] * field[i, c]
        if J != 0.0:
            nb_sum = 0.0
            for k in range(nbr.shape[1]):
                j = nbr[i, k]
                if j < 0:
                    continue
                for c in range(n):
                    nb_sum += diff[c] * values[j, c]
            dE -= J * nb_sum
        if dE <= 0.0 or uniforms[i] < math.exp(-beta * dE):
            accepted += 1
            dE_total += dE
            for c in range(n):
                values[i, c] = proposals[i, c]
            for j in range(V):
                cij = C[j, i]
                if cij != 0.0:
                    for c in range(n):
                        field[j, c] += cij * diff[c]
    return accepted, dE_total


def _neighbour_table(box: Box) -> np.ndarray:
    d = box.d
    out = np.full((len(box), 2 * d), -1, dtype=np.int64)
    sites = box.sites
    for k in range(d):
        for col, step in ((2 * k, 1), (2 * k + 1, -1)):
            y = sites.copy()
            y[:, k] += step
            ok = np.abs(y).max(axis=1) <= box.N
            out[ok, col] = box.indices(y[ok])
    return out


def coupling_matrix(box: Box, spec: ModelSpec, N: int) -> np.ndarray:
    """Dense ``C_xy = 2 lambda K_xy`` on pairs with at least one end in ``Lambda_N``."""
    V = len(box)
    if spec.lam == 0:
        return np.zeros((V, V))
    if V > DENSE_COUPLING_LIMIT:
        raise ValueError(f"box with {V} sites too large for the dense Metropolis kernel")
    disp = box.sites[None, :, :] - box.sites[:, None, :]
    C = spec.kernel(disp.reshape(-1, box.d)).reshape(V, V)
    np.fill_diagonal(C, 0.0)
    inside = box.linf <= N
    C *= (inside[:, None] | inside[None, :])
    return 2.0 * spec.lam * C


@dataclass
class ChainState:
    """A Markov chain: spins, model, RNG stream and bookkeeping."""

    config: SpinConfig
    spec: ModelSpec
    seed: int = 0
    stream: int = 0
    sweeps: int = 0
    accepted: int = 0
    proposed: int = 0
    energy: float = 0.0
    rng: np.random.Generator = field(default=None, repr=False)
    _field: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        pot = self.spec.potential
        if not isinstance(pot, (ZeroPotential, NearestNeighbourPotential)):
            raise TypeError("the sampler supports the zero and nearest-neighbour potentials")
        if self.rng is None:
            self.rng = make_rng(self.seed, self.stream)
        box = self.config.box
        self.N = box.N - self.spec.r
        self.C = coupling_matrix(box, self.spec, self.N)
        self.nbr = _neighbour_table(box)
        self.J = pot.J if isinstance(pot, NearestNeighbourPotential) else 0.0
        if self._field is None:
            self.refresh()

    @property
    def box(self) -> Box:
        return self.config.box

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0

    def full_energy(self) -> float:
        return float(hamiltonian_values(self.config.values, self.box, self.N, self.spec))

    def refresh(self) -> None:
        """Recompute the local field and the energy from scratch."""
        self._field = self.C @ self.config.values
        self.energy = self.full_energy()

    def energy_drift(self) -> float:
        """Relative mismatch between the bookkept and the recomputed energy."""
        full = self.full_energy()
        return abs(self.energy - full) / max(1.0, abs(full))


def metropolis_sweep(state: ChainState) -> ChainState:
    """One lexicographic sweep of independence proposals (fresh uniform spins)."""
    cfg = state.config
    V, n = cfg.values.shape
    proposals = random_unit_spin(state.rng, n, size=V)
    uniforms = state.rng.random(V)
    acc, dE = _sweep_kernel(cfg.values, state._field, state.C, state.nbr, state.J,
                            float(state.spec.beta), proposals, uniforms, cfg.mask)
    state.accepted += int(acc)
    state.proposed += int(cfg.mask.sum())
    state.energy += dE
    state.sweeps += 1
    if state.sweeps % REFRESH_EVERY == 0:
        cfg.renormalize()
        state._field = state.C @ cfg.values
    return state


def run_sweeps(state: ChainState, count: int) -> ChainState:
    for _ in range(count):
        metropolis_sweep(state)
    return state


# ---------------------------------------------------------------------------
# Observables


@dataclass
class ObservableSeries:
    magnetization: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    delta: list = field(default_factory=list)
    blocks: list = field(default_factory=list)
    burn_in: int = 0
    every: int = 1
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return max(len(self.magnetization), len(self.delta))

    def record(self, state: ChainState, block_centres=None, ell: int | None = None):
        self.magnetization.append(state.config.magnetization().copy())
        self.energy.append(state.energy)
        if block_centres is not None:
            from .defect import block_magnetization
            self.blocks.append([block_magnetization(state.config, c, ell) for c in block_centres])

    def as_arrays(self) -> dict:
        return {k: np.asarray(getattr(self, k)) for k in ("magnetization", "energy", "delta")}


def batch_means(x, batches: int = 30, min_batches: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Mean and batch-means standard error along axis 0."""
    x = np.asarray(x, dtype=np.float64)
    T = len(x)
    nb = min(batches, T)
    if nb < min_batches:
        raise ValueError(f"need at least {min_batches} samples for batch means, got {T}")
    size = T // nb
    trimmed = x[: size * nb]
    means = trimmed.reshape((nb, size) + x.shape[1:]).mean(axis=1)
    se = means.std(axis=0, ddof=1) / math.sqrt(nb)
    return x.mean(axis=0), se


def estimate_magnetization(series: ObservableSeries, batches: int = 30):
    """Time-averaged magnetization vector with its batch-means standard error."""
    return batch_means(np.asarray(series.magnetization), batches)


def sample_chain(state: ChainState, measurements: int, every: int = 10, burn_in: int = 0,
                 profile: DeformationProfile | None = None, chunk: int = 256) -> ObservableSeries:
    """Run burn-in, then record observables (and defects, given a profile) every ``every`` sweeps."""
    series = ObservableSeries(burn_in=burn_in, every=every)
    run_sweeps(state, burn_in)
    op = state.spec.kernel.operator(state.box) if profile is not None and state.spec.lam else None
    buf = []

    def flush():
        if buf:
            d = energy_defect_batch(np.stack(buf), state.box, profile, state.spec, op, state.N)
            series.delta.extend(float(v) for v in d)
            buf.clear()

    for _ in range(measurements):
        run_sweeps(state, every)
        series.record(state)
        if profile is not None:
            buf.append(state.config.values.copy())
            if len(buf) >= chunk:
                flush()
    if profile is not None:
        flush()
    return series


def defect_distribution(state: ChainState, profile: DeformationProfile, measurements: int,
                        every: int = 10, burn_in: int = 0) -> ObservableSeries:
    """Sample ``Delta_{L,a}`` along the chain."""
    if state.N < profile.L:
        raise ValueError(f"box half-side {state.box.N} too small for L={profile.L}")
    return sample_chain(state, measurements, every, burn_in, profile)


# ---------------------------------------------------------------------------
# Inequality diagnostics


@dataclass
class InequalityResult:
    lhs: float
    rhs: float
    se: float
    passed: bool


def defect_tail_check(deltas, beta: float, t: float) -> InequalityResult:
    """One-sided check of ``P(Delta >= t) <= exp(-beta t / 2)`` with the full event."""
    deltas = np.asarray(deltas, dtype=np.float64)
    if deltas.size == 0 or np.ptp(deltas) == 0.0:
        raise ValueError("degenerate defect series (empty or zero variance)")
    ind = (deltas >= t).astype(np.float64)
    lhs, se = batch_means(ind)
    rhs = math.exp(-beta * t / 2)
    return InequalityResult(float(lhs), rhs, float(se), bool(lhs <= rhs + 3 * se))


def lemma35_test(state: ChainState, profile: DeformationProfile, t: float, samples: int,
                 every: int = 10, burn_in: int = 1000) -> InequalityResult:
    series = defect_distribution(state, profile, samples, every, burn_in)
    return defect_tail_check(series.delta, state.spec.beta, t)


def lemma34_diagnostic(deltas, zeta: float, I_value: float, lambda_over_c: float,
                       batches: int = 30) -> InequalityResult:
    """Compare ``P(Delta >= zeta I)`` with ``(E Delta - zeta I) / ((lambda/c - zeta) I)``."""
    if not zeta < lambda_over_c:
        raise ValueError("zeta must be below lambda/c")
    deltas = np.asarray(deltas, dtype=np.float64)
    thr = zeta * I_value
    denom = (lambda_over_c - zeta) * I_value
    ind = (deltas >= thr).astype(np.float64)
    rhs_series = (deltas - thr) / denom
    diff = ind - rhs_series
    _, se = batch_means(diff, batches)
    lhs, rhs = float(ind.mean()), float(rhs_series.mean())
    return InequalityResult(lhs, rhs, float(se), bool(lhs >= rhs - 3 * se))


# ---------------------------------------------------------------------------
# Product-measure oracle


@dataclass(frozen=True)
class ProductMeasureSpec:
    m_star: float
    direction: int = 0

    def __post_init__(self):
        if not (0.0 <= self.m_star < 1.0):
            raise ValueError("bias must satisfy 0 <= m_star < 1")


def sample_biased_product(measure: ProductMeasureSpec, box: Box, n: int,
                          rng: np.random.Generator, batch: int | None = None) -> SpinConfig | np.ndarray:
    """I.i.d. spins: ``e_1`` with probability ``m_star``, uniform otherwise.

    With ``batch`` returns a raw array ``(batch, V, n)`` instead of a config.
    """
    shape = (len(box),) if batch is None else (batch, len(box))
    vals = random_unit_spin(rng, n, size=int(np.prod(shape))).reshape(shape + (n,))
    pinned = rng.random(shape) < measure.m_star
    e = np.zeros(n)
    e[measure.direction] = 1.0
    vals[pinned] = e
    return SpinConfig(box, n, vals) if batch is None else vals


def product_measure_defect_oracle(m_star: float, profile: DeformationProfile, spec: ModelSpec,
                                  R_cut: int | None = None):
    """Closed-form expectation of ``Delta`` under the biased product law.

    Independence gives ``E(sigma_x . P12 sigma_y) = m_star^2`` for ``x != y``,
    hence ``m_star^2 (lambda sum K~ - J sum_bonds 4 sin^2)``.  Returns
    ``(value, certificate)``.
    """
    pot = spec.potential
    if not isinstance(pot, (ZeroPotential, NearestNeighbourPotential)):
        raise TypeError("closed form available for the zero and nearest-neighbour potentials only")
    m2 = float(m_star) ** 2
    kt, cert = ktilde_total(profile, spec.kernel, R_cut)
    value = spec.lam * kt
    if isinstance(pot, NearestNeighbourPotential):
        value -= pot.J * nn_bond_defect_weight(profile)
    return m2 * value, cert.scaled(m2 * spec.lam)


# ---------------------------------------------------------------------------
# Snapshots


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": obj.tolist(), "dtype": str(obj.dtype)}
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _from_jsonable(obj):
    if isinstance(obj, dict):
        if "__ndarray__" in obj:
            return np.array(obj["__ndarray__"], dtype=obj["dtype"])
        return {k: _from_jsonable(v) for k, v in obj.items()}
    return obj


def save_chain(path, state: ChainState) -> None:
    """Versioned JSON snapshot; floats use ``repr`` so they round-trip exactly."""
    cfg = state.config
    doc = {
        "format": "spinlab-chain",
        "version": SNAPSHOT_VERSION,
        "spec": state.spec.to_text(),
        "d": cfg.d, "M": cfg.M, "n": cfg.n,
        "seed": state.seed, "stream": state.stream,
        "sweeps": state.sweeps, "accepted": state.accepted, "proposed": state.proposed,
        "energy": state.energy,
        "rng": _to_jsonable(state.rng.bit_generator.state),
        "values": cfg.values.tolist(),
        "field": state._field.tolist(),
        "mask": cfg.mask.astype(int).tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_chain(path) -> ChainState:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "spinlab-chain":
        raise ValueError(f"{path} is not a chain snapshot")
    if doc["version"] != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {doc['version']}")
    spec = ModelSpec.from_text(doc["spec"])
    box = Box(doc["d"], doc["M"])
    cfg = SpinConfig(box, doc["n"], np.array(doc["values"]), np.array(doc["mask"], dtype=bool))
    rng = make_rng(doc["seed"], doc["stream"])
    rng.bit_generator.state = _from_jsonable(doc["rng"])
    state = ChainState(cfg, spec, doc["seed"], doc["stream"], doc["sweeps"], doc["accepted"],
                       doc["proposed"], doc["energy"], rng, np.array(doc["field"]))
    return state
