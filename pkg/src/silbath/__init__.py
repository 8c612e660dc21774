"""Open qubit dynamics with an explicit bosonic bath.

The qubit and a discretized power-law bath are propagated together in a
truncated Fock basis by short-iterative Lanczos steps; Born-Markov
(Lindblad) dynamics and closed-form results serve as references.
"""

from __future__ import annotations

from .bath import BathSpec, DiscreteBath, discretize, lindblad_gamma, lindblad_lamb_shift, spectral_density
from .errors import (DomainError, FitError, NumericalError, RecurrenceWarning, ResourceError, SilbathError,
                     StepRejected)
from .fock import BasisState, FockBasis, SystemState, enumerate_basis, initial_state
from .hamiltonian import HamiltonianModel, Schedule, spectral_gap
from .lindblad import LindbladModel, integrate_rk4, sbm_analytic
from .observables import ReducedDensity, energy_partition, reduce, residual_energy
from .sil import SilConfig, propagate, step

__version__ = "0.1.0"

__all__ = [
    "BathSpec", "DiscreteBath", "discretize", "spectral_density", "lindblad_gamma", "lindblad_lamb_shift",
    "BasisState", "FockBasis", "SystemState", "enumerate_basis", "initial_state",
    "HamiltonianModel", "Schedule", "spectral_gap",
    "SilConfig", "step", "propagate",
    "ReducedDensity", "reduce", "energy_partition", "residual_energy",
    "LindbladModel", "integrate_rk4", "sbm_analytic",
    "SilbathError", "DomainError", "ResourceError", "NumericalError", "StepRejected", "FitError",
    "RecurrenceWarning",
]
