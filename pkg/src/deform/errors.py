"""Exception types raised by the deform package."""

from __future__ import annotations


class DeformError(Exception):
    """Base class for all package errors."""


class DomainError(DeformError, ValueError):
    """A point lies outside the open set a map or chart is defined on."""

    def __init__(self, message: str, coordinates=None):
        super().__init__(message)
        self.coordinates = coordinates


class StencilError(DeformError, ValueError):
    """A finite-difference stencil does not fit inside the domain."""

    def __init__(self, message: str, required_radius: float):
        super().__init__(message)
        self.required_radius = required_radius


class NonInvertibleError(DeformError, ValueError):
    pass


class UncoveredRegionError(DeformError, ValueError):
    """A partition of unity does not cover the support of a field."""

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class ResolutionError(DeformError, ValueError):
    """A sampling lattice is too coarse or too short for the data on it."""


class CompositionError(DeformError, ValueError):
    """Two arrows were multiplied although they are not composable."""


class QuadratureToleranceError(DeformError, RuntimeError):
    """Fiber quadrature did not reach its tolerance after all refinements."""

    def __init__(self, message: str, estimate: float, tolerance: float, nodes: int):
        super().__init__(message)
        self.estimate = estimate
        self.tolerance = tolerance
        self.nodes = nodes


class ConfigError(DeformError, ValueError):
    """A scenario configuration is malformed or references an unknown key."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class SeriesError(DeformError, ValueError):
    pass
