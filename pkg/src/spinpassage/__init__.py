"""Adiabatic-passage state transfer in spin-1 bilinear-biquadratic chains."""

__version__ = "0.1.0"

from .control import (
    OptimizedPath,
    adiabatic_threshold,
    blackman_window,
    perturbative_excitation,
    synthesize_optimized_path,
)
from .dynamics import (
    CouplingSchedule,
    StateVector,
    TransferRecord,
    differential_phase,
    evolve,
    mirror_symmetry_deviation,
    prepare_dimer_state,
    reduced_density,
    site_populations,
    transfer_fidelity,
)
from .exceptions import (
    CapabilityError,
    ConfigurationError,
    ConvergenceError,
    FirstOrderBreakdownWarning,
    NormDriftError,
    SpinPassageError,
)
from .lattice import (
    HubbardParams,
    SuperlatticeConfig,
    hubbard_to_bb,
    scattering_to_ctilde,
    superlattice_potential,
    timescale_estimate,
)
from .spectral import (
    SpectralProfile,
    coupling_profile,
    gap_profile,
    lowest_eigenpairs,
    min_gap_scaling,
    spectral_profile,
)
from .spin_ops import BBParams, SparseHamiltonian, build_hamiltonian, sector_basis

__all__ = [
    "BBParams",
    "CapabilityError",
    "ConfigurationError",
    "ConvergenceError",
    "CouplingSchedule",
    "FirstOrderBreakdownWarning",
    "HubbardParams",
    "NormDriftError",
    "OptimizedPath",
    "SparseHamiltonian",
    "SpectralProfile",
    "SpinPassageError",
    "StateVector",
    "SuperlatticeConfig",
    "TransferRecord",
    "adiabatic_threshold",
    "blackman_window",
    "build_hamiltonian",
    "coupling_profile",
    "differential_phase",
    "evolve",
    "gap_profile",
    "hubbard_to_bb",
    "lowest_eigenpairs",
    "min_gap_scaling",
    "mirror_symmetry_deviation",
    "perturbative_excitation",
    "prepare_dimer_state",
    "reduced_density",
    "scattering_to_ctilde",
    "sector_basis",
    "site_populations",
    "spectral_profile",
    "superlattice_potential",
    "synthesize_optimized_path",
    "timescale_estimate",
    "transfer_fidelity",
]
