"""Exception types raised by the numerical routines."""

from __future__ import annotations


class ReflectedOUError(Exception):
    """Base class for all package errors."""


class SolverError(ReflectedOUError):
    """A numerical solver failed; maps to CLI exit status 3."""


class SolverDiverged(SolverError):
    pass


class NotOnBoundary(ReflectedOUError, ValueError):
    pass


class DegenerateGradient(ReflectedOUError, ValueError):
    pass


class EmptyShell(SolverError):
    pass


class HypothesisViolated(SolverError):
    pass


class RejectionStarved(SolverError):
    pass


class ChainNotMixed(SolverError):
    pass


class NonCauchy(SolverError):
    pass


class NotContracting(SolverError):
    pass


class SubcriticalLambda(ReflectedOUError, ValueError):
    pass


class ConfigError(ReflectedOUError, ValueError):
    """Invalid run configuration; maps to CLI exit status 2."""
