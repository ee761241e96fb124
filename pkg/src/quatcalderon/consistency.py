"""Round-trip checks between the conductivity equation and the Dirac system.

For a scalar solution ``u`` of ``div(gamma grad u) = 0`` the pair

    phi1 = gamma^(1/2) Dbar u,    phi2 = gamma^(1/2) D u

solves ``D phi1 = phi2 q1`` and ``Dbar phi2 = phi1 q2``.  Residuals are
normalised by the sizes of the individual derivative terms, so a field that
satisfies an identity only through cancellation still scores near zero.

Scalar fields are passed as a periodic grid part plus an optional constant
``slope``: the function represented is ``u(x) + slope . x``, whose gradient
is ``grad u + slope``.  Only this way can a non-constant solution of the
conductivity equation live on the periodic box.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .dirac import DiracPotentials
from .grid import Grid3, QField, spectral_gradient
from .quat import qmul

_UNITS = [np.array([1, 0, 0, 0], complex), np.array([0, 1, 0, 0], complex), np.array([0, 0, 1, 0], complex)]


@dataclass
class PhiPair:
    phi1: QField
    phi2: QField
    gamma: QField


def _scalar(f: QField, name: str) -> np.ndarray:
    if np.any(f.values[1:] != 0):
        raise ValueError(f"{name} must be scalar-valued")
    return f.values[0]


def _gradient(u: QField, slope) -> np.ndarray:
    grad = spectral_gradient(_scalar(u, "u"), u.grid)
    if slope is not None:
        grad = grad + np.asarray(slope, dtype=float).reshape(3, 1, 1, 1)
    return grad


def phi_from_u(u: QField, gamma: QField, slope=None) -> PhiPair:
    """``phi1 = sqrt(gamma) Dbar u``, ``phi2 = sqrt(gamma) D u`` (principal root)."""
    grid = u.grid
    grad = _gradient(u, slope)
    root = np.sqrt(_scalar(gamma, "gamma"))
    du = np.zeros((4,) + grid.shape, dtype=complex)
    du[:3] = grad
    dbar = du.copy()
    dbar[1:3] *= -1
    return PhiPair(QField(grid, root * dbar), QField(grid, root * du), gamma)


def _d_terms(values: np.ndarray, grid: Grid3, sign: float) -> list[np.ndarray]:
    g = spectral_gradient(values, grid)
    return [g[0], sign * qmul(_UNITS[1].reshape(4, 1, 1, 1), g[1]), sign * qmul(_UNITS[2].reshape(4, 1, 1, 1), g[2])]


def _balance(terms: list[np.ndarray], rhs: np.ndarray, mask=None) -> float:
    """``||sum(terms) - rhs|| / (sum ||term|| + ||rhs||)``."""
    sel = (slice(None),) if mask is None else (slice(None), mask)
    res = np.linalg.norm((sum(terms) - rhs)[sel])
    scale = sum(np.linalg.norm(t[sel]) for t in terms) + np.linalg.norm(rhs[sel])
    return float(res / scale) if scale > 0 else 0.0


def dirac_residual(phi: PhiPair, pots: DiracPotentials, mask=None) -> tuple[float, float]:
    """Relative residuals of ``D phi1 = phi2 q1`` and ``Dbar phi2 = phi1 q2``."""
    grid = phi.phi1.grid
    r1 = _balance(_d_terms(phi.phi1.values, grid, 1.0), qmul(phi.phi2.values, pots.q1.values), mask)
    r2 = _balance(_d_terms(phi.phi2.values, grid, -1.0), qmul(phi.phi1.values, pots.q2.values), mask)
    return r1, r2


def conductivity_terms(u: QField, gamma: QField, slope=None) -> list[np.ndarray]:
    """``d_j (gamma d_j u)`` for ``j = 0, 1, 2``, spectrally."""
    grid = u.grid
    g = _scalar(gamma, "gamma")
    grad = _gradient(u, slope)
    return [spectral_gradient(g * grad[j], grid)[j] for j in range(3)]


def conductivity_residual(u: QField, gamma: QField, mask=None, slope=None) -> float:
    """Relative L2 norm of ``div(gamma grad u)`` against its three terms."""
    terms = conductivity_terms(u, gamma, slope)
    sel = (Ellipsis,) if mask is None else (mask,)
    res = np.linalg.norm(sum(terms)[sel])
    scale = sum(np.linalg.norm(t[sel]) for t in terms)
    return float(res / scale) if scale > 0 else 0.0


def laplacian_via_dirac(u: QField) -> np.ndarray:
    """``D (Dbar u)`` for scalar ``u``; equals the Laplacian."""
    grid = u.grid
    dbar = sum(_d_terms(u.values, grid, -1.0))
    return sum(_d_terms(dbar, grid, 1.0))


def solve_conductivity(gamma: QField, slope=(1.0, 0.0, 0.0), tol: float = 1e-10, maxiter: int = 200) -> QField:
    """Periodic part ``w`` of the solution ``u = slope . x + w`` of ``div(gamma grad u) = 0``.

    ``w`` solves ``div(gamma grad w) = -grad(gamma) . slope`` by GMRES with
    the inverse Laplacian as preconditioner; pass the same ``slope`` to the
    residual functions.
    """
    grid = gamma.grid
    g = _scalar(gamma, "gamma")
    d = np.asarray(slope, dtype=float)
    shape = grid.shape
    xi2 = np.sum(grid.xi_lattice() ** 2, axis=0)
    inv = np.zeros_like(xi2)
    inv[xi2 > 0] = -1.0 / xi2[xi2 > 0]

    def div_gamma_grad(w):
        grad = spectral_gradient(w, grid)
        return sum(spectral_gradient(g * grad[j], grid)[j] for j in range(3))

    def apply(v):
        return div_gamma_grad(v.reshape(shape)).ravel()

    def precond(v):
        return np.fft.ifftn(np.fft.fftn(v.reshape(shape)) * inv).ravel()

    n = g.size
    A = LinearOperator((n, n), matvec=apply, dtype=complex)
    M = LinearOperator((n, n), matvec=precond, dtype=complex)
    grad_gamma = spectral_gradient(g, grid)
    rhs = -np.tensordot(d, grad_gamma, axes=(0, 0)).ravel()
    w, info = gmres(A, rhs, rtol=tol, atol=0.0, restart=50, maxiter=maxiter, M=M)
    if info != 0:
        raise RuntimeError(f"GMRES did not converge (info={info})")
    return QField.scalar(grid, w.reshape(shape))


def write_battery(rows: list[dict], path) -> None:
    """CSV with one row per case: name, conductivity residual, both Dirac residuals."""
    cols = ["case", "conductivity", "dirac1", "dirac2"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({c: r[c] for c in cols})
