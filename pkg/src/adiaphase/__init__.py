"""Geometric phases for adiabatic dynamics driven by non-Hermitian Hamiltonians.

Subpackages by layer: :mod:`linalg` (eigen-machinery), :mod:`models`
(Hamiltonian families), :mod:`spectral` (tracked eigensystems and
projectors), :mod:`propagation` (finite-T dynamics) and :mod:`phases`
(connections, effective eigenvalues and phase decompositions).
"""

from . import errors, linalg, models, phases, propagation, spectral
from .errors import *  # noqa: F401,F403
from .linalg import EigenSystem, eigensystem, eigenvalues, solve_linear
from .models import HamiltonianModel, TwoLevelPulseParams, load_model, parse_model_config, two_level_pulse
from .phases import (PhaseDecomposition, SuperadiabaticSystem, aa_phase_decomposition, connection_orthogonal,
                     connection_spectral, deviation, effective_eigenvalue, superadiabatic_system)
from .propagation import build_local_section, evolution_operator, propagate
from .spectral import EigenTrajectory, TimeGrid, track_eigensystem

__version__ = "0.1.0"

__all__ = [
    "errors", "linalg", "models", "phases", "propagation", "spectral",
    "EigenSystem", "eigensystem", "eigenvalues", "solve_linear",
    "HamiltonianModel", "TwoLevelPulseParams", "load_model", "parse_model_config", "two_level_pulse",
    "PhaseDecomposition", "SuperadiabaticSystem", "aa_phase_decomposition", "connection_orthogonal",
    "connection_spectral", "deviation", "effective_eigenvalue", "superadiabatic_system",
    "build_local_section", "evolution_operator", "propagate",
    "EigenTrajectory", "TimeGrid", "track_eigensystem",
] + errors.__all__
