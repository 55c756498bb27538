"""Custom exception hierarchy."""

from __future__ import annotations

from typing import Any, Mapping


class LabError(Exception):
    """Base exception for the scalarflat_lab package.

    ``where`` names the failing ``module.operation``; ``details`` carries partial
    diagnostics (measured values, offending locations) for reports.
    """

    exit_code = 2

    def __init__(
        self, where: str, message: str, details: Mapping[str, Any] | None = None
    ) -> None:
        super().__init__(f"{where}: {message}")
        self.where = where
        self.message = message
        self.details: dict[str, Any] = dict(details or {})


class ValidationError(LabError):
    """Raised when configuration or command-line input is malformed."""

    exit_code = 1


class InvariantError(LabError):
    """Raised when a mathematical invariant or precondition fails."""


class NumericalFailure(LabError):
    """Raised when an iterative method cannot deliver the requested accuracy."""


class NonPositiveDefinite(InvariantError):
    pass


class InvariantViolation(InvariantError):
    pass


class StencilOutOfDomain(InvariantError):
    pass


class DomainError(InvariantError):
    pass


class Divergent(InvariantError):
    pass


class BoundViolation(InvariantError):
    pass


class PoleUnresolved(InvariantError):
    pass


class InterpolationOutOfDomain(InvariantError):
    pass


class GridMismatch(InvariantError):
    pass


class SupportClipped(InvariantError):
    pass


class HypothesisViolated(InvariantError):
    pass


class NotSomewherePositive(InvariantError):
    pass


class RegimeMismatch(InvariantError):
    pass


class InsufficientSweep(InvariantError):
    pass


class NotUmbilic(InvariantError):
    pass


class PositivityLost(InvariantError):
    pass


class ConstraintDegenerate(InvariantError):
    pass


class NonConvergence(NumericalFailure):
    """``partial`` holds the last iterate when the solver gave up."""

    partial: Any = None


class GridTooCoarse(NumericalFailure):
    pass
