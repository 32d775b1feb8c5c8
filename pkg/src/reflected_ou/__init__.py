"""Reflected and penalized Ornstein-Uhlenbeck processes in convex sets of Hilbert space."""

from __future__ import annotations

from .convexbody import Ball, ConvexBody, Ellipsoid, IntegrandBody, QuadraticLevel, WholeSpace
from .errors import (
    ConfigError,
    NonCauchy,
    NotContracting,
    ReflectedOUError,
    SolverError,
    SubcriticalLambda,
)
from .perturb import DriftSpec, invariant_density, perturbed_resolvent, t_lambda_apply
from .reports import ResidualReport
from .resolvent import GridConfig, feynman_kac, grid_solve, neumann_limit
from .sde import Scheme, simulate
from .spectral import SpectralModel
from .surface import coarea_check, hypothesis_integrals, pushforward_density, sigma_curve
from .testfunctions import TestFunction, constant, coordinate, trig
from .verify import (
    EstimatorConfig,
    boundary_limit,
    ibp_mu,
    ibp_nu,
    ibp_nu_eps,
    invariance,
    log_sobolev,
    neumann_convergence,
    stationarity,
)

__version__ = "0.1.0"

__all__ = [
    "Ball", "ConvexBody", "Ellipsoid", "IntegrandBody", "QuadraticLevel", "WholeSpace",
    "ConfigError", "NonCauchy", "NotContracting", "ReflectedOUError", "SolverError",
    "SubcriticalLambda", "DriftSpec", "invariant_density", "perturbed_resolvent",
    "t_lambda_apply", "ResidualReport", "GridConfig", "feynman_kac", "grid_solve",
    "neumann_limit", "Scheme", "simulate", "SpectralModel", "coarea_check",
    "hypothesis_integrals", "pushforward_density", "sigma_curve", "TestFunction",
    "constant", "coordinate", "trig", "EstimatorConfig", "boundary_limit", "ibp_mu",
    "ibp_nu", "ibp_nu_eps", "invariance", "log_sobolev", "neumann_convergence",
    "stationarity",
]
