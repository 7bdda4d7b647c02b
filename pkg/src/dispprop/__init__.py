"""Displacement propagation for noisy continuous-variable circuits.

Estimates characteristic functions, coherent-state overlaps and quadrature
moments of circuits built from Gaussian gates, thermal loss and cubic phase
gates, together with the contraction coefficients that predict when those
estimates are cheap.  A truncated Fock-space simulator is included as ground
truth for small instances.
"""

__version__ = "0.1.0"

from .channels import Circuit, CubicGate, NoisyLayer, ThermalLoss
from .gates import Beamsplitter, Displacement, Rotation, Shear, Squeeze
from .phase_space import SymplecticGaussian, coherent, input_char, thermal, vacuum
from .propagation import (
    EstimateResult,
    estimate_char,
    estimate_char_adaptive,
    estimate_char_near_gaussian,
    estimate_char_unbiased,
    select_estimator,
)
from .sampling import OracleSpec, RngStream

__all__ = [
    "Beamsplitter",
    "Circuit",
    "CubicGate",
    "Displacement",
    "EstimateResult",
    "NoisyLayer",
    "OracleSpec",
    "RngStream",
    "Rotation",
    "Shear",
    "Squeeze",
    "SymplecticGaussian",
    "ThermalLoss",
    "coherent",
    "estimate_char",
    "estimate_char_adaptive",
    "estimate_char_near_gaussian",
    "estimate_char_unbiased",
    "input_char",
    "select_estimator",
    "thermal",
    "vacuum",
]
