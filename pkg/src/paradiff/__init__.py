"""Paradifferential solver for (d_t + d_x^3) u = F(u, u_x, u_xx) on a periodic box."""

from .errors import (AdmissionError, ConvergenceError, GridMismatchError, NonlinearityError, ParadiffError,
                     ResolutionError, ScenarioError, ThresholdError, UnknownTagError)
from .nonlinearity import Monomial, PolynomialNonlinearity, validate
from .spectral_core import Grid, SpaceTimeField, SpectralField

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "SpectralField",
    "SpaceTimeField",
    "Monomial",
    "PolynomialNonlinearity",
    "validate",
    "ParadiffError",
    "ResolutionError",
    "GridMismatchError",
    "NonlinearityError",
    "ThresholdError",
    "AdmissionError",
    "ConvergenceError",
    "UnknownTagError",
    "ScenarioError",
    "__version__",
]
