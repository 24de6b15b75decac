"""Floquet-Lindblad spectra and mean-field dynamics of a driven, dissipative
Bose-Hubbard dimer and of rings built from it."""

__version__ = "0.1.0"

from .fock import (
    DimerBasis,
    DimerParams,
    SiteOperator,
    basis_dimension,
    build_bec_state,
    build_coherent,
    build_flip,
    build_hamiltonian,
    build_imbalance,
    build_jump,
)
from .liouvillian import (
    DriveProtocol,
    FloquetPropagator,
    Superoperator,
    build_liouvillian,
    evolve_state,
    flip_superoperator,
    ideal_flip_propagator,
    propagate_piecewise,
)
from .meanfield_dimer import (
    MfParams,
    bifurcation_scan,
    classify_attractor,
    critical_interaction,
    evolve_spin,
    find_fixed_points,
    spin_rhs,
    stroboscopic_map,
)
from .meanfield_ring import RingParams, RingProtocol, generalized_imbalance, ring_fourier, ring_parameter_scan, ring_rhs, run_ring
from .numerics import IntegrationError, NumericalError
from .spectrum import SpectrumReport, scaling_run, spectral_decompose
