"""Error taxonomy shared across the package.

Three failure classes map onto the three nonzero CLI exit codes: bad input or
configuration (1), numerical breakdown (2), and a verification check that ran
to completion but did not hold (3).
"""

from __future__ import annotations


class UsageError(ValueError):
    """Invalid arguments, configuration files, or domain/chart data."""

    exit_code = 1


class GeometryError(UsageError):
    """Geometrically invalid input: self-intersecting polylines, points
    outside a chart's coordinate range, incompatible chart models."""


class NumericalError(RuntimeError):
    """A numerical procedure failed: mesh refinement stalled, a sparse
    factorization broke down, or an iteration did not converge."""

    exit_code = 2

    def __init__(self, message: str, trace: list | None = None):
        super().__init__(message)
        self.trace = trace or []


class VerificationError(RuntimeError):
    """A verification pipeline ran but one of its certified stages failed."""

    exit_code = 3

    def __init__(self, message: str, stage: str = ""):
        super().__init__(message)
        self.stage = stage
