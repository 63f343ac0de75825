"""Adaptive identification of transfer-function coefficients for stable SISO plants.

Modules
-------
coeffs       coefficient models, bounds and plant descriptions
plants       time-domain simulators (delay, heat rod, damped string)
filters      filter bank producing the regressor
identifier   sliding-window gradient-flow estimator
pe           excitation level and bound-ratio checks
reconstruct  inversion from coefficients to physical parameters
harness      configuration and experiment runners (CLI in ``adaptid.cli``)
"""
from .coeffs import (
    CoeffBounds,
    CoeffModel,
    DelayPlant,
    HeatPlant,
    LinearEI,
    TabulatedEI,
    WavePlant,
    bounds_for,
    delay_coeffs,
    heat_coeffs,
    wave_coeffs_peano,
)
from .filters import FilterBank, regressor
from .identifier import SlidingWindowEstimator
from .pe import PEReport
from .reconstruct import reconstruct_delay, reconstruct_heat, reconstruct_wave

__version__ = "0.1.0"
