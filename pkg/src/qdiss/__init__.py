"""Dissipative quantum dynamics in one dimension: wave-function, strong-friction,
phase-space and trajectory solvers with closed-form reference curves."""
from ._backend import BACKEND
from .config import ConfigError, Scenario, parse_config
from .core import (DensityField, Grid1D, NumericalError, PhysicalParams, PotentialSpec, WaveFunction,
                   build_grid, gaussian_density, gaussian_wavefunction)

__version__ = "0.1.0"

__all__ = ["BACKEND", "ConfigError", "Scenario", "parse_config", "DensityField", "Grid1D", "NumericalError",
           "PhysicalParams", "PotentialSpec", "WaveFunction", "build_grid", "gaussian_density",
           "gaussian_wavefunction", "__version__"]
