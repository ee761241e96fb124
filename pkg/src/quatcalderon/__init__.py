"""Quaternionic tools for the complex-conductivity Calderon problem in three dimensions.

Modules: ``quat`` (complex quaternion algebra), ``grid`` (fields and
phantoms), ``calculus`` (Dirac operators, Teodorescu transform, boundary
integrals), ``cgo`` (exponentially growing solutions), ``dirac`` (amplitude
equations), ``scatter`` (scattering data), ``recon`` (reconstruction),
``consistency`` (conductivity/Dirac round trips), ``verify`` and ``cli``.
"""

from .errors import (
    DegenerateDirection,
    DivisionByZeroError,
    InconsistentPotential,
    NonContractive,
    NotAdmissible,
    PositivityViolation,
    QuatCalderonError,
    TooCloseToBoundary,
    ZeroDivisorError,
)
from .grid import Bump, Grid3, Phantom, QField, default_phantom, sample_phantom
from .quat import CQuat

__all__ = [
    "Bump",
    "CQuat",
    "DegenerateDirection",
    "DivisionByZeroError",
    "Grid3",
    "InconsistentPotential",
    "NonContractive",
    "NotAdmissible",
    "Phantom",
    "PositivityViolation",
    "QField",
    "QuatCalderonError",
    "TooCloseToBoundary",
    "ZeroDivisorError",
    "default_phantom",
    "sample_phantom",
]
