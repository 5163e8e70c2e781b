"""NV electron-spin dephasing with a nitrogen nuclear-spin memory: forward model,
non-Markovianity measures and Bayesian inference."""

from .errors import ConvergenceError, DataIOError, NvDephaseError, SamplingError, ValidationError
from .nonmarkov import (
    NmReport,
    Trajectory,
    detect_monotone_intervals,
    measure_exact,
    measure_modified,
    measure_modified_from_data,
)
from .oracle import NuclearDensityMatrix, coherence_trace, conditional_propagator, simulate_ramsey
from .spin_model import (
    ContrastModel,
    DephasingEnvelope,
    FidModelParams,
    HyperfineCoupling,
    NitrogenState,
    NmModelParams,
    PopulationModel,
    bloch_length,
    bloch_length_phi,
    contrast_eval,
    envelope_eval,
    nitrogen_populations,
    population_eval,
    revival_times,
)
from .trace import CoherenceTrace

__version__ = "0.1.0"

__all__ = [
    "CoherenceTrace", "ContrastModel", "ConvergenceError", "DataIOError", "DephasingEnvelope",
    "FidModelParams", "HyperfineCoupling", "NitrogenState", "NmModelParams", "NmReport",
    "NuclearDensityMatrix", "NvDephaseError", "PopulationModel", "SamplingError", "Trajectory",
    "ValidationError", "bloch_length", "bloch_length_phi", "coherence_trace",
    "conditional_propagator", "contrast_eval", "detect_monotone_intervals", "envelope_eval",
    "measure_exact", "measure_modified", "measure_modified_from_data", "nitrogen_populations",
    "population_eval", "revival_times", "simulate_ramsey",
]
