"""Exception types raised across the toolkit."""


class QuatCalderonError(Exception):
    """Base class for toolkit errors."""


class ZeroDivisorError(QuatCalderonError, ZeroDivisionError):
    """A complex quaternion with vanishing ``a * bar(a)`` has no inverse."""


class DivisionByZeroError(QuatCalderonError, ZeroDivisionError):
    """Left division by ``i xi`` requested at ``xi = 0``."""


class PositivityViolation(QuatCalderonError, ValueError):
    """The real part of a conductivity drops below the admissible bound."""


class DegenerateDirection(QuatCalderonError, ValueError):
    """No orthogonal direction can be built from the supplied vectors."""


class TooCloseToBoundary(QuatCalderonError, ValueError):
    """A Cauchy integral was requested closer to the surface than the mesh resolves."""


class NonContractive(QuatCalderonError, RuntimeError):
    """The Neumann series diverged; ``k`` is below the contraction threshold."""

    def __init__(self, message, k=None, log=None):
        super().__init__(message)
        self.k = k
        self.log = log or []


class NotAdmissible(QuatCalderonError, ValueError):
    """``(xi, k)`` does not satisfy ``(i xi + zeta) . (i xi + zeta) = 0``."""


class InconsistentPotential(QuatCalderonError, ValueError):
    """A reconstructed potential is not of gradient type within tolerance."""
