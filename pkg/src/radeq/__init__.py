"""Radiative equilibrium in convex media: fixed-point solvers, transport
operators, a Monte Carlo cross-check and a Fourier compactness bench."""

from .geometry import ConvexDomain, build_sphere_quadrature
from .physics import (
    AngularShape,
    BoundaryInflux,
    BoundarySpectrum,
    CoefficientLaw,
    FrequencyProfile,
    RadiativeModel,
    ScatteringKernel,
)
from .solver import SolverConfig, SolveReport, solve

__version__ = "0.1.0"

__all__ = [
    "AngularShape",
    "BoundaryInflux",
    "BoundarySpectrum",
    "CoefficientLaw",
    "ConvexDomain",
    "FrequencyProfile",
    "RadiativeModel",
    "ScatteringKernel",
    "SolveReport",
    "SolverConfig",
    "build_sphere_quadrature",
    "solve",
]
