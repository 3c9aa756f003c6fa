"""Exception types shared across the package."""

from __future__ import annotations


class KfsiError(Exception):
    """Base class for all simulator errors."""


class InvalidArgumentError(KfsiError, ValueError):
    pass


class DegenerateCurveError(KfsiError):
    """The boundary metric dropped below the admissible threshold."""


class OrientationError(KfsiError, ValueError):
    """A boundary curve was supplied counterclockwise."""


class InconsistentDataError(KfsiError):
    """Data for a periodic boundary problem violates its solvability condition."""


class TangledMeshError(KfsiError):
    """The Lagrangian map lost positivity of its Jacobian."""

    def __init__(self, message: str, element: int, time: float | None = None):
        super().__init__(message)
        self.element = element
        self.time = time


class SingularSystemError(KfsiError):
    pass


class ConfigError(KfsiError, ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line
        self.key = key
