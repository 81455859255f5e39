"""Stochastic generalized Burgers-Huxley equation on [0, 1]: simulation and small-noise checks."""

__version__ = "0.1.0"

from ._backend import backend_name
from .dynamics import GCoefficient, ModelParams
from .grid import Grid, eigenfunctions, project
from .noise import NoiseSpec
from .solver import integrate, run_batch

__all__ = ["GCoefficient", "Grid", "ModelParams", "NoiseSpec", "__version__", "backend_name",
           "eigenfunctions", "integrate", "project", "run_batch"]
