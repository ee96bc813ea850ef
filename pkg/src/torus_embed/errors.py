"""Exception hierarchy.

Every error carries a stable machine-readable ``code`` used by the CLI
reports; messages are for humans.
"""

from __future__ import annotations


class TorusEmbedError(Exception):
    code = "error"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


class InvalidModulusError(TorusEmbedError, ValueError):
    code = "invalid-modulus"


class PoleProximityError(TorusEmbedError, ValueError):
    code = "pole-proximity"

    def __init__(self, message: str, nearest: complex):
        super().__init__(message, nearest=nearest)
        self.nearest = nearest


class OrderTooSmallError(TorusEmbedError, ValueError):
    code = "order-too-small"

    def __init__(self, message: str, min_order: int):
        super().__init__(message, min_order=min_order)
        self.min_order = min_order


class EmptySetError(TorusEmbedError, ValueError):
    code = "empty-set"


class ArityError(TorusEmbedError, ValueError):
    code = "arity"


class InvalidDomainError(TorusEmbedError, ValueError):
    code = "invalid-domain"


class ConvergenceError(TorusEmbedError, RuntimeError):
    code = "no-convergence"


class DegenerateComponentError(TorusEmbedError, RuntimeError):
    code = "degenerate-component"


class KernelUndefinedError(TorusEmbedError, ValueError):
    code = "kernel-undefined"


class DegenerateShiftError(TorusEmbedError, ValueError):
    code = "degenerate-shift"


class PolePlacementError(TorusEmbedError, ValueError):
    code = "pole-placement"


class LocationError(TorusEmbedError, ValueError):
    code = "location"


class TubeTooLargeError(TorusEmbedError, ValueError):
    code = "tube-too-large"

    def __init__(self, message: str, safe_radius: float):
        super().__init__(message, safe_radius=safe_radius)
        self.safe_radius = safe_radius


class PlacementError(TorusEmbedError, ValueError):
    code = "placement"


class ConstructionError(TorusEmbedError, RuntimeError):
    code = "construction"


class ChartDomainError(TorusEmbedError, ValueError):
    code = "chart-domain"


class NearSingularityError(TorusEmbedError, ValueError):
    code = "near-singularity"


class ValidationError(TorusEmbedError, ValueError):
    code = "validation"


class NoSolutionFoundError(TorusEmbedError, RuntimeError):
    """Raised when the preimage iteration fails. Not a disproof of existence."""

    code = "no-solution-found"


class DescriptorError(TorusEmbedError, ValueError):
    code = "descriptor-parse"
