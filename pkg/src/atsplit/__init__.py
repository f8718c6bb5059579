"""Driven dissipative three-level transmon: steady-state Lindblad solver,
Autler-Townes spectroscopy sweeps, Lorentzian doublet fitting, and
dark-state fidelity analysis."""

from .analysis import (
    DarkStateOverlap,
    DoubletFit,
    DressedStates,
    LorentzianModel,
    SeparationMetrics,
    SingletFit,
    dark_state_fidelity,
    dressed_eigenstates,
    fit_peaks,
    separation_metrics,
)
from .errors import (
    ConfigError,
    DegenerateData,
    NoConvergence,
    NonPhysicalCoherence,
    NonPhysicalResult,
    SingularLiouvillian,
    StepTooLarge,
)
from .experiments import (
    DoubletBackground,
    Grid1D,
    Observable,
    SweepResult,
    at_map,
    at_slice,
    coupler_spectroscopy,
    default_map_grid,
    default_slice_grid,
    eit_regime_scan,
    fidelity_vs_coupler,
    probe_spectroscopy,
    rabi_trace,
)
from .model import (
    DecoherenceRates,
    DeviceSpec,
    DriveParams,
    ThreeLevelModel,
    basis_ket,
    build_hamiltonian,
    check_density_matrix,
    check_hamiltonian,
    collapse_operators,
    detunings_from_frequencies,
    frequencies_from_detunings,
    ket_bra,
    rates_from_coherence_times,
    validate_three_level,
)
from .solver import (
    ReadoutMode,
    Trajectory,
    build_liouvillian,
    evolve,
    max_cyclic_frequency,
    readout_signal,
    steady_state,
    unvectorize,
    vectorize,
)

__version__ = "0.1.0"
