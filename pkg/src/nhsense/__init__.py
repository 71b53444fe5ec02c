"""Directional-amplification lattice sensors: closed forms checked against brute-force oracles."""

from .core import (
    NO_PERTURBATION,
    ChainParams,
    EvenChainWarning,
    NumericalError,
    Perturbation,
    PerturbationKind,
    PoleError,
    StabilityError,
    build_dynamical_matrix,
)
from .sensing import SensingResult, snr_nhse, snr_qfi_linear

__version__ = "0.1.0"

__all__ = [
    "NO_PERTURBATION",
    "ChainParams",
    "EvenChainWarning",
    "NumericalError",
    "Perturbation",
    "PerturbationKind",
    "PoleError",
    "SensingResult",
    "StabilityError",
    "build_dynamical_matrix",
    "snr_nhse",
    "snr_qfi_linear",
]
