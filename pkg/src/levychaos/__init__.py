"""Heavy-tailed disorder, Levy white noise and polynomial chaos.

Numerical toolkit for disordered pinning and directed polymer models in the
intermediate disorder regime with gamma-stable (heavy-tailed) disorder.
"""
from __future__ import annotations

from .errors import (
    CapacityError,
    GateError,
    LevyChaosError,
    NumericalError,
    ParameterError,
    ToleranceError,
)
from . import chaos, heavy_tail, levy_noise, pinning, polymer, stats
from .heavy_tail import NoiseScales, TailLaw, sample_disorder, solve_noise_scale

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "GateError",
    "LevyChaosError",
    "NoiseScales",
    "NumericalError",
    "ParameterError",
    "TailLaw",
    "ToleranceError",
    "chaos",
    "heavy_tail",
    "levy_noise",
    "pinning",
    "polymer",
    "stats",
    "sample_disorder",
    "solve_noise_scale",
]
