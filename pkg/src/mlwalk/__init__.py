"""Simulation and high-precision certification tools for a multilayer random walk."""

from mlwalk.model import (
    AnomalousParams,
    DiffusionConstants,
    LevelRule,
    ModelParams,
    StationaryMeasure,
    XiLaw,
    alpha_exponent,
    diffusion_constants,
    make_anomalous,
    stationary_measure,
)

__all__ = [
    "AnomalousParams",
    "DiffusionConstants",
    "LevelRule",
    "ModelParams",
    "StationaryMeasure",
    "XiLaw",
    "alpha_exponent",
    "diffusion_constants",
    "make_anomalous",
    "stationary_measure",
]

__version__ = "0.1.0"
