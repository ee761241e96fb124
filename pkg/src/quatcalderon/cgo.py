"""Spectral parameters ``zeta(k)`` and exponentially growing monogenic functions.

For ``k`` in R^3 we pick ``kperp`` orthogonal to ``k`` with ``|kperp| = |k|/2``
and set ``zeta = kperp + i k / 2``.  Then ``zeta . zeta = 0`` (complex bilinear
dot product), the paravector ``embed(zeta)`` is a null quaternion, and
``E(x, zeta) = exp(x . zeta) bar(zeta)`` is monogenic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDirection
from .quat import embed, qconj, qmul

DEGENERATE_RTOL = 1e-12


@dataclass(frozen=True)
class SpectralParam:
    """A frequency sample ``k`` with its null vector ``zeta = kperp + i k/2``."""

    k: np.ndarray
    kperp: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.k, dtype=float)
        kp = np.asarray(self.kperp, dtype=float)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "kperp", kp)
        nk = np.linalg.norm(k)
        if nk == 0 or np.linalg.norm(kp) == 0:
            raise DegenerateDirection("k and kperp must be nonzero")

    @property
    def zeta_vec(self) -> np.ndarray:
        return self.kperp + 0.5j * self.k

    @property
    def zeta_conj_vec(self) -> np.ndarray:
        """Complex-conjugated vector ``kperp - i k/2``."""
        return self.kperp - 0.5j * self.k

    @property
    def zeta_quat(self) -> np.ndarray:
        return embed(self.zeta_vec)

    def null_defect(self) -> tuple[complex, float]:
        """``(zeta . zeta, |zeta bar(zeta)|)``; both vanish for admissible zeta."""
        z = self.zeta_vec
        q = self.zeta_quat
        return complex(np.dot(z, z)), float(np.max(np.abs(qmul(q, qconj(q)))))


def perpendicular_direction(k, xi=None) -> np.ndarray:
    """Unit vector orthogonal to ``k`` by the deterministic selection rule.

    Without ``xi`` the reference axis is the coordinate axis where ``|k_a|`` is
    smallest (lowest index on ties); with ``xi`` it is ``xi`` itself.
    """
    k = np.asarray(k, dtype=float)
    nk = np.linalg.norm(k)
    if nk == 0:
        raise DegenerateDirection("k = 0 has no orthogonal complement to select from")
    if xi is None:
        ref = np.zeros(3)
        ref[int(np.argmin(np.abs(k)))] = 1.0
    else:
        ref = np.asarray(xi, dtype=float)
    c = np.cross(k, ref)
    nc = np.linalg.norm(c)
    if nc <= DEGENERATE_RTOL * nk * max(np.linalg.norm(ref), 1e-300):
        raise DegenerateDirection(f"k x {ref.tolist()} vanishes; perturb k")
    return c / nc


def make_zeta(k, xi=None) -> SpectralParam:
    """Build ``zeta(k)`` with ``|kperp| = |k|/2``.

    Parameters
    ----------
    k : array_like, shape (3,)
        Real frequency, nonzero.
    xi : array_like, optional
        When given, ``kperp`` is taken along ``k x xi`` so that
        ``xi . kperp = 0`` (needed for admissible scattering pairs).
    """
    k = np.asarray(k, dtype=float)
    direction = perpendicular_direction(k, xi)
    return SpectralParam(k, 0.5 * np.linalg.norm(k) * direction)


def exp_growing(x, zp: SpectralParam) -> np.ndarray:
    """``exp(x . zeta) bar(zeta)`` at points ``x`` with leading axis 3.

    Returns an array with leading axis 4 and the trailing shape of ``x``.
    """
    x = np.asarray(x, dtype=float)
    phase = np.tensordot(zp.zeta_vec, x, axes=(0, 0))
    zbar = qconj(zp.zeta_quat).reshape((4,) + (1,) * (x.ndim - 1))
    return np.exp(phase) * zbar


def modulation(x, k, sign: int = 1) -> np.ndarray:
    """``exp(sign i x . k)`` for points ``x`` with leading axis 3."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    x = np.asarray(x, dtype=float)
    return np.exp(sign * 1j * np.tensordot(np.asarray(k, dtype=float), x, axes=(0, 0)))


def fd_monogenicity(x, zp: SpectralParam, step: float = 1e-4) -> float:
    """Central-difference ``|D E(x, zeta)| / |E(x, zeta)|`` at one point."""
    x = np.asarray(x, dtype=float)
    units = [np.array([1, 0, 0, 0], complex), np.array([0, 1, 0, 0], complex), np.array([0, 0, 1, 0], complex)]
    total = np.zeros(4, dtype=complex)
    for j in range(3):
        e = np.zeros(3)
        e[j] = step
        deriv = (exp_growing(x + e, zp) - exp_growing(x - e, zp)) / (2 * step)
        total += qmul(units[j], deriv)
    return float(np.linalg.norm(total) / np.linalg.norm(exp_growing(x, zp)))
