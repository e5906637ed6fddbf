"""Energy-defect bounds, scaling sums and Monte Carlo checks for O(n) spin
models with long-range antiferromagnetic power-law couplings."""

__version__ = "0.1.0"

from .lattice import Box, linf_dist_to_complement, preimage_multiplicity_bound, wedge_map
from .spin import DeformationProfile, SpinConfig, apply_inhomogeneous_rotation, theta
from .model import ModelSpec, builtin_nn_potential, hamiltonian, kernel_power_law
from .defect import energy_defect, pair_defect, q_minus_parts, q_plus, uniform_bound
from .scaling import benchmark_scale, classify_regime, model_sums

__all__ = [
    "Box", "linf_dist_to_complement", "preimage_multiplicity_bound", "wedge_map",
    "DeformationProfile", "SpinConfig", "apply_inhomogeneous_rotation", "theta",
    "ModelSpec", "builtin_nn_potential", "hamiltonian", "kernel_power_law",
    "energy_defect", "pair_defect", "q_minus_parts", "q_plus", "uniform_bound",
    "benchmark_scale", "classify_regime", "model_sums",
]
