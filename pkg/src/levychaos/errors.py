"""Exception hierarchy.

Every error carries the process exit code the command line runner maps it to.
"""
from __future__ import annotations


class LevyChaosError(Exception):
    exit_code = 1


class ParameterError(LevyChaosError, ValueError):
    """Invalid model or numerical parameter."""

    exit_code = 2


class ToleranceError(LevyChaosError):
    """A verification check exceeded its tolerance."""

    exit_code = 2


class GateError(LevyChaosError):
    """Configuration outside the subcritical (disorder relevant) regime."""

    exit_code = 3


class CapacityError(LevyChaosError):
    """Requested computation exceeds an enumeration or memory budget."""

    exit_code = 4


class NumericalError(LevyChaosError, ArithmeticError):
    """Series failed to converge, or non-finite values appeared."""

    exit_code = 5
