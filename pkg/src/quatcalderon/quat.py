"""Complex quaternions (C (x) H) with the three conjugations.

Two levels of API live here:

* array functions (``qmul``, ``qconj``, ...) acting on ``complex128`` arrays
  whose *leading* axis has length 4 and holds the coefficients of
  ``1, e1, e2, e3``; every field in the package is stored this way;
* :class:`CQuat`, a small value type wrapping one such length-4 array, for
  scalar work and readable tests.

Basis rules: ``e1 e2 = e3 = -e2 e1`` and ``ei^2 = -1``; the complex unit
``i`` commutes with all ``ei``.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .errors import ZeroDivisorError

ZERO_DIVISOR_RTOL = 1e-12


def as_quat_array(a) -> np.ndarray:
    """Coerce ``a`` to a complex array with leading axis 4.

    Accepts a :class:`CQuat`, a complex scalar (promoted to ``a * 1``) or
    anything array-like whose first axis has length 4.
    """
    if isinstance(a, CQuat):
        return a.coeffs
    if np.isscalar(a):
        out = np.zeros(4, dtype=complex)
        out[0] = a
        return out
    arr = np.asarray(a, dtype=complex)
    if arr.shape[:1] != (4,):
        raise ValueError(f"expected leading axis of length 4, got shape {arr.shape}")
    return arr


def qmul(a, b) -> np.ndarray:
    """Quaternion product ``a b`` of broadcastable coefficient arrays."""
    a = as_quat_array(a)
    b = as_quat_array(b)
    a0, a1, a2, a3 = a
    b0, b1, b2, b3 = b
    return np.stack(
        [
            a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
        ]
    )


def qconj(a) -> np.ndarray:
    """Quaternionic conjugate: negate the ``e1, e2, e3`` parts."""
    a = as_quat_array(a)
    out = -a
    out[0] = a[0]
    return out


def cconj(a) -> np.ndarray:
    """Complex conjugate of every coefficient."""
    return np.conj(as_quat_array(a))


def herm(a) -> np.ndarray:
    """Hermitian conjugate (quaternionic and complex at once)."""
    return np.conj(qconj(a))


def conjugate(a, mode: str = "quat") -> np.ndarray:
    """Dispatch to one of the conjugations by name: quat, herm or complex."""
    if mode == "quat":
        return qconj(a)
    if mode == "herm":
        return herm(a)
    if mode == "complex":
        return cconj(a)
    raise ValueError(f"unknown conjugation mode {mode!r}")


def sc(a) -> np.ndarray:
    """Scalar part."""
    return as_quat_array(a)[0]


def vec(a) -> np.ndarray:
    """Vector part ``a - Sc a`` (still a length-4 array)."""
    out = np.array(as_quat_array(a), copy=True)
    out[0] = 0
    return out


def inner(a, b) -> np.ndarray:
    """C-valued inner product ``Sc(herm(a) b)``."""
    a = as_quat_array(a)
    b = as_quat_array(b)
    return np.sum(np.conj(a) * b, axis=0)


def qnorm(a) -> np.ndarray:
    """Euclidean norm of the eight real coefficients, ``sqrt(Sc(herm(a) a))``."""
    a = as_quat_array(a)
    return np.sqrt(np.sum(a.real**2 + a.imag**2, axis=0))


def qinv(a, rtol: float = ZERO_DIVISOR_RTOL) -> np.ndarray:
    """Two-sided inverse ``bar(a) / (a bar(a))``.

    ``a bar(a)`` is the complex scalar ``a0^2 + a1^2 + a2^2 + a3^2``; it can
    vanish for nonzero complex quaternions (null quaternions), in which case
    :class:`ZeroDivisorError` is raised.
    """
    a = as_quat_array(a)
    nrm2 = np.sum(a * a, axis=0)
    scale = np.sum(a.real**2 + a.imag**2, axis=0)
    if np.any(np.abs(nrm2) <= rtol * scale) or np.any(scale == 0):
        raise ZeroDivisorError("null quaternion: a * bar(a) vanishes")
    return qconj(a) / nrm2


def embed(v) -> np.ndarray:
    """Paravector embedding ``(v0, v1, v2) -> v0 + v1 e1 + v2 e2``.

    ``v`` may carry extra trailing axes; the leading axis must have length 3.
    """
    v = np.asarray(v)
    if v.shape[:1] != (3,):
        raise ValueError(f"expected leading axis of length 3, got shape {v.shape}")
    out = np.zeros((4,) + v.shape[1:], dtype=complex)
    out[:3] = v
    return out


def left_matrix(a) -> np.ndarray:
    """4x4 complex matrix of ``x -> a x`` (acts on coefficient vectors)."""
    a0, a1, a2, a3 = as_quat_array(a)
    return np.array(
        [
            [a0, -a1, -a2, -a3],
            [a1, a0, -a3, a2],
            [a2, a3, a0, -a1],
            [a3, -a2, a1, a0],
        ],
        dtype=complex,
    )


class CQuat:
    """A single complex quaternion ``c0 + c1 e1 + c2 e2 + c3 e3``."""

    __slots__ = ("coeffs",)

    def __init__(self, c0=0.0, c1=0.0, c2=0.0, c3=0.0):
        self.coeffs = np.array([c0, c1, c2, c3], dtype=complex)

    @classmethod
    def from_array(cls, arr) -> "CQuat":
        arr = np.asarray(arr, dtype=complex)
        if arr.shape != (4,):
            raise ValueError(f"expected shape (4,), got {arr.shape}")
        q = cls.__new__(cls)
        q.coeffs = np.array(arr, copy=True)
        return q

    @classmethod
    def from_vector(cls, v: Iterable) -> "CQuat":
        return cls.from_array(embed(np.asarray(list(v))))

    @classmethod
    def basis(cls, j: int) -> "CQuat":
        arr = np.zeros(4, dtype=complex)
        arr[j] = 1.0
        return cls.from_array(arr)

    def __getitem__(self, j):
        return self.coeffs[j]

    def __iter__(self):
        return iter(self.coeffs)

    def __repr__(self):
        c = ", ".join(f"{z:.6g}" for z in self.coeffs)
        return f"CQuat({c})"

    def _other(self, other):
        if isinstance(other, CQuat):
            return other.coeffs
        if np.isscalar(other):
            return as_quat_array(other)
        return NotImplemented

    def __add__(self, other):
        o = self._other(other)
        if o is NotImplemented:
            return o
        return CQuat.from_array(self.coeffs + o)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._other(other)
        if o is NotImplemented:
            return o
        return CQuat.from_array(self.coeffs - o)

    def __rsub__(self, other):
        o = self._other(other)
        if o is NotImplemented:
            return o
        return CQuat.from_array(o - self.coeffs)

    def __neg__(self):
        return CQuat.from_array(-self.coeffs)

    def __mul__(self, other):
        if np.isscalar(other):
            return CQuat.from_array(self.coeffs * other)
        o = self._other(other)
        if o is NotImplemented:
            return o
        return CQuat.from_array(qmul(self.coeffs, o))

    def __rmul__(self, other):
        if np.isscalar(other):
            return CQuat.from_array(other * self.coeffs)
        return NotImplemented

    def __truediv__(self, other):
        if np.isscalar(other):
            return CQuat.from_array(self.coeffs / other)
        return NotImplemented

    def __eq__(self, other):
        o = self._other(other)
        if o is NotImplemented:
            return o
        return bool(np.all(self.coeffs == o))

    def __hash__(self):
        return hash(tuple(self.coeffs))

    def isclose(self, other, atol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.coeffs - as_quat_array(other)) <= atol))

    def conj(self, mode: str = "quat") -> "CQuat":
        return CQuat.from_array(conjugate(self.coeffs, mode))

    @property
    def scalar(self) -> complex:
        return complex(self.coeffs[0])

    @property
    def vector(self) -> "CQuat":
        return CQuat.from_array(vec(self.coeffs))

    def sc_vec(self) -> tuple[complex, "CQuat"]:
        return self.scalar, self.vector

    def norm(self) -> float:
        return float(qnorm(self.coeffs))

    def inner(self, other) -> complex:
        return complex(inner(self.coeffs, as_quat_array(other)))

    def inverse(self, rtol: float = ZERO_DIVISOR_RTOL) -> "CQuat":
        return CQuat.from_array(qinv(self.coeffs, rtol))


E0 = CQuat.basis(0)
E1 = CQuat.basis(1)
E2 = CQuat.basis(2)
E3 = CQuat.basis(3)
