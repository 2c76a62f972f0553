"""Exception types shared across the package."""


class AffineError(Exception):
    """Base class for affinekit errors."""


class DimensionError(AffineError):
    """Structurally inconsistent shapes (distinct from an admissibility failure)."""


class AdmissibilityError(AffineError):
    """A parameter set violates the conditions required by an operation."""


class ExplosionError(AffineError):
    """The transform exponent blew up before the requested horizon.

    ``t_reached`` is the last time the solution was still finite, when known.
    """

    def __init__(self, message, t_reached=None):
        super().__init__(message)
        self.t_reached = t_reached


class StripError(AffineError):
    """A dampening anchor lies outside the maximal domain of the transform."""


class NoSolutionError(AffineError):
    """A root-finding target is outside the attainable range."""


class NumericalError(AffineError):
    """An internal numeric cross-check failed beyond its documented tolerance."""
