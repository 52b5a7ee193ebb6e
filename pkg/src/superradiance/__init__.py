"""Collective emission of dense emitter arrays: exact and cumulant dynamics."""

__version__ = "0.1.0"

from .couplings import (CouplingMatrix, Reservoir, build_couplings, couplings_dicke,
                        couplings_free_space, couplings_independent, couplings_waveguide)
from .cumulants import CumulantState, CumulantSystem, TruncationWarning, init_fully_excited
from .exact import CapacityError, DensityMatrix, ExactLindblad, evolve_exact
from .geometry import EmitterArray, LatticeKind, build_lattice, lattice_for_total, polarization
from .integrator import IntegrationError, IntegratorConfig, integrate
from .observables import EmissionTrace, emission_rate, find_peak
from .reduction import DistanceClasses, ReducedSystem
from .simulation import simulate

__all__ = [
    "CapacityError", "CouplingMatrix", "CumulantState", "CumulantSystem", "DensityMatrix",
    "DistanceClasses", "EmissionTrace", "EmitterArray", "ExactLindblad", "IntegrationError",
    "IntegratorConfig", "LatticeKind", "ReducedSystem", "Reservoir", "TruncationWarning",
    "build_couplings", "build_lattice", "couplings_dicke", "couplings_free_space",
    "couplings_independent", "couplings_waveguide", "emission_rate", "evolve_exact",
    "find_peak", "init_fully_excited", "integrate", "lattice_for_total", "polarization",
    "simulate",
]
