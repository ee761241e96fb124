"""Scattering data ``h(xi, zeta(k))`` in volume and boundary form.

Volume form (defined for every ``k``)::

    h_volume(xi, k) = (i xi) int exp(-i x.xi) mu1(x, k) q2(x) dx

Boundary form (only for admissible pairs, where the weight
``g = (i xi + zeta) exp(-x.(i xi + zeta))`` satisfies ``g Dbar = 0``)::

    h_boundary(xi, k) = (i xi + zeta) int_dOmega exp(-x.(i xi + zeta)) bar(alpha) phi2 dS

with ``phi2 = exp(x.(kperp - i k/2)) mu2``.  All exponentials combine to
``exp(-i x.xi) nu2`` with the demodulated amplitude ``nu2``, which is what is
integrated.  Clifford-Green turns the boundary form into

    h_boundary = h_volume + zeta I1 + (i xi + zeta) bar(zeta^c) I2,

    I1 = int exp(-i x.xi) mu1 q2 dx,   I2 = int_Omega exp(-i x.xi) nu2 dx,

which :func:`boundary_decomposition` evaluates term by term.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .calculus import BoundaryMesh, trace
from .cgo import SpectralParam, make_zeta
from .dirac import BoxSolution, DiracPotentials, MuPair, potentials_from_gamma, solve_mu
from .errors import NonContractive, NotAdmissible
from .grid import Grid3, Phantom, QField, ball_fraction, dft3, sample_phantom
from .quat import embed, qconj, qmul

ADMISSIBLE_RTOL = 1e-10


def admissibility_defect(xi, k, kperp) -> float:
    """``|(i xi + zeta).(i xi + zeta)| / |xi|^2`` for ``zeta = kperp + i k/2``."""
    xi = np.asarray(xi, dtype=float)
    w = 1j * xi + np.asarray(kperp, dtype=float) + 0.5j * np.asarray(k, dtype=float)
    return float(abs(np.dot(w, w)) / max(np.dot(xi, xi), 1e-300))


def is_admissible(xi, k, kperp, rtol: float = ADMISSIBLE_RTOL) -> bool:
    """``xi.k = -|xi|^2`` and ``xi.kperp = 0`` to relative tolerance ``rtol``."""
    return admissibility_defect(xi, k, kperp) <= rtol


def admissible_pair(xi, t: float, w=None) -> SpectralParam:
    """``k = -xi + t w`` with unit ``w`` orthogonal to ``xi``; ``kperp`` along ``k x xi``.

    Without ``w`` the direction is ``normalize(xi x e_a)`` for the axis ``a``
    where ``|xi_a|`` is smallest.
    """
    xi = np.asarray(xi, dtype=float)
    if w is None:
        e = np.zeros(3)
        e[int(np.argmin(np.abs(xi)))] = 1.0
        w = np.cross(xi, e)
    w = np.asarray(w, dtype=float)
    w = w - np.dot(w, xi) / np.dot(xi, xi) * xi
    w /= np.linalg.norm(w)
    return make_zeta(-xi + t * w, xi)


def admissible_pairs(count: int, xi_max: float, k_abs: float, seed: int = 0) -> list[tuple[np.ndarray, SpectralParam]]:
    """Random admissible ``(xi, zeta)`` pairs with ``|xi| <= xi_max`` and ``|k| = k_abs``."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        d = rng.standard_normal(3)
        xi = d / np.linalg.norm(d) * rng.uniform(0.3, 1.0) * xi_max
        if k_abs <= np.linalg.norm(xi):
            continue
        t = np.sqrt(k_abs**2 - np.dot(xi, xi))
        w = np.cross(xi, rng.standard_normal(3))
        out.append((xi, admissible_pair(xi, t, w)))
    return out


# ---------------------------------------------------------------------------
# the two forms


def volume_moment(xi, mu: MuPair, pots: DiracPotentials) -> np.ndarray:
    """``int exp(-i x.xi) mu1 q2 dx`` at ``xi`` of shape ``(3,)`` or ``(3, m)``."""
    single = np.ndim(xi) == 1
    xi = np.asarray(xi, dtype=float).reshape(3, -1)
    dens = QField(pots.grid, qmul(mu.mu1.values, pots.q2.values))
    out = dft3(dens, xi)
    return out[:, 0] if single else out


def h_volume(xi, mu: MuPair, pots: DiracPotentials) -> np.ndarray:
    """``embed(i xi) int exp(-i x.xi) mu1 q2 dx``; shape ``(4,)`` or ``(4, m)``."""
    single = np.ndim(xi) == 1
    xi = np.asarray(xi, dtype=float).reshape(3, -1)
    out = qmul(embed(1j * xi), volume_moment(xi, mu, pots))
    return out[:, 0] if single else out


def h_volume_box(xi, sol: BoxSolution, pots: DiracPotentials) -> np.ndarray:
    """``h_volume`` from a box-only solution; ``xi`` of shape ``(3, m)``."""
    box = sol.box
    dens = QField(box.grid, qmul(sol.mu1, box.restrict(pots.q2.values)))
    return qmul(embed(1j * xi), dft3(dens, xi))


def h_volume_lattice(mu: MuPair, pots: DiracPotentials) -> tuple[np.ndarray, np.ndarray]:
    """``h_volume`` on the whole DFT lattice by one FFT; returns ``(xi, h)``."""
    lattice, moment = dft3(QField(pots.grid, qmul(mu.mu1.values, pots.q2.values)))
    return lattice, qmul(embed(1j * lattice), moment)


def _boundary_sum(xi, nu2_trace: np.ndarray, mesh: BoundaryMesh) -> np.ndarray:
    phase = np.exp(-1j * mesh.centroids @ xi)
    return np.sum(qmul(qconj(mesh.alpha), nu2_trace) * (phase * mesh.areas), axis=1)


def h_boundary(xi, zp: SpectralParam, mu: MuPair, mesh: BoundaryMesh) -> np.ndarray:
    """Surface form of the scattering data for an admissible pair.

    Raises :class:`NotAdmissible` when ``(i xi + zeta).(i xi + zeta)`` exceeds
    ``1e-10 |xi|^2``.
    """
    xi = np.asarray(xi, dtype=float)
    if not is_admissible(xi, zp.k, zp.kperp):
        raise NotAdmissible(f"(xi, k) = ({xi.tolist()}, {zp.k.tolist()}) is not admissible")
    if not np.allclose(mu.k, zp.k):
        raise ValueError("mu was solved for a different k")
    w = embed(1j * xi + zp.zeta_vec)
    return qmul(w, _boundary_sum(xi, trace(mu.nu2, mesh.centroids), mesh))


def boundary_decomposition(xi, zp: SpectralParam, mu: MuPair, pots: DiracPotentials, mesh: BoundaryMesh) -> dict:
    """Terms of the Clifford-Green identity linking the two forms.

    Returns the boundary and volume values, the two extra terms
    ``zeta I1`` and ``(i xi + zeta) bar(zeta^c) I2``, the defect of
    ``h_boundary = h_volume + zeta I1 + (i xi + zeta) bar(zeta^c) I2``
    relative to the largest term, and the plain boundary/volume mismatch.
    """
    xi = np.asarray(xi, dtype=float)
    hb = h_boundary(xi, zp, mu, mesh)
    moment = volume_moment(xi, mu, pots)
    hv = qmul(embed(1j * xi), moment)
    centre = mesh.vertices.mean(axis=0)
    radius = float(np.mean(np.linalg.norm(mesh.vertices - centre, axis=1)))
    chi = ball_fraction(pots.grid, radius, centre)
    i2 = dft3(QField(pots.grid, mu.nu2.values * chi), xi.reshape(3, 1))[:, 0]
    zeta_term = qmul(zp.zeta_quat, moment)
    nu_term = qmul(qmul(embed(1j * xi + zp.zeta_vec), qconj(embed(zp.zeta_conj_vec))), i2)
    rhs = hv + zeta_term + nu_term
    return {
        "h_boundary": hb,
        "h_volume": hv,
        "zeta_term": zeta_term,
        "nu_term": nu_term,
        "defect": float(np.linalg.norm(hb - rhs) / max(np.linalg.norm(t) for t in (hb, hv, zeta_term, nu_term))),
        "mismatch": float(np.linalg.norm(hb - hv) / np.linalg.norm(hv)),
    }


# ---------------------------------------------------------------------------
# tables


@dataclass
class ScatteringTable:
    """Rows of ``(xi, k, h, provenance)`` plus run metadata."""

    xi: np.ndarray
    k: np.ndarray
    h: np.ndarray
    provenance: list
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.provenance)

    def select(self, provenance: str) -> "ScatteringTable":
        idx = [i for i, p in enumerate(self.provenance) if p == provenance]
        return ScatteringTable(self.xi[idx], self.k[idx], self.h[:, idx], [provenance] * len(idx), dict(self.meta))

    def lookup(self, xi, k, provenance: str = "volume", atol: float = 1e-12) -> np.ndarray:
        hit = (
            np.all(np.abs(self.xi - np.asarray(xi)) <= atol, axis=1)
            & np.all(np.abs(self.k - np.asarray(k)) <= atol, axis=1)
            & (np.asarray(self.provenance) == provenance)
        )
        idx = np.nonzero(hit)[0]
        if len(idx) == 0:
            raise KeyError(f"no {provenance} entry at xi={list(xi)}, k={list(k)}")
        return self.h[:, idx[0]]

    def to_csv(self, path) -> None:
        cols = ["xi0", "xi1", "xi2", "k0", "k1", "k2"] + [f"re{j}" for j in range(4)] + [f"im{j}" for j in range(4)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols + ["provenance"])
            for i in range(len(self)):
                vals = [*self.xi[i], *self.k[i], *self.h[:, i].real, *self.h[:, i].imag]
                w.writerow([f"{v:.17g}" for v in vals] + [self.provenance[i]])

    @classmethod
    def from_csv(cls, path, meta: dict | None = None) -> "ScatteringTable":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        xi = np.array([[float(r[f"xi{j}"]) for j in range(3)] for r in rows]).reshape(-1, 3)
        k = np.array([[float(r[f"k{j}"]) for j in range(3)] for r in rows]).reshape(-1, 3)
        h = np.array([[float(r[f"re{j}"]) + 1j * float(r[f"im{j}"]) for j in range(4)] for r in rows]).T.reshape(4, -1)
        return cls(xi, k, h, [r["provenance"] for r in rows], meta or {})

    def write_manifest(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.meta, fh, indent=2, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not serializable: {type(o)}")


@dataclass
class SolverSettings:
    tol: float = 1e-8
    max_iter: int = 50


def _converged_mu(pots: DiracPotentials, k, settings: SolverSettings) -> MuPair:
    mu = solve_mu(pots, k, settings.tol, settings.max_iter)
    if not mu.converged:
        raise NonContractive(
            f"no convergence within {settings.max_iter} sweeps at |k| = {np.linalg.norm(k):.4g}", k=np.asarray(k), log=mu.log
        )
    return mu


def forward(
    ph: Phantom,
    grid: Grid3,
    xis,
    ks,
    settings: SolverSettings | None = None,
    pairs=None,
    mesh: BoundaryMesh | None = None,
    mapper=map,
) -> ScatteringTable:
    """Volume-form table over ``xis x ks`` plus boundary rows for admissible ``pairs``.

    ``pairs`` is a list of ``(xi, SpectralParam)``; for each, both forms are
    recorded, and the metadata collects their mismatch together with the
    defect of the identity checked by :func:`boundary_decomposition`.  :class:`~quatcalderon.errors.NonContractive` is raised, with
    the offending ``k`` attached, when the solver diverges or exhausts its
    sweeps.  ``mapper`` (e.g. ``ThreadPoolExecutor.map``) fans the per-``k``
    solves out; results are collected in input order.
    """
    settings = settings or SolverSettings()
    pots = potentials_from_gamma(sample_phantom(ph, grid))
    xis = np.asarray(xis, dtype=float).reshape(-1, 3)
    ks = np.asarray(ks, dtype=float).reshape(-1, 3)

    def volume_rows(k):
        mu = _converged_mu(pots, k, settings)
        h = h_volume(xis.T, mu, pots) if len(xis) else np.zeros((4, 0), complex)
        return mu.iterations, h

    rows_xi, rows_k, rows_h, prov = [], [], [], []
    iters = []
    for k, (it, h) in zip(ks, mapper(volume_rows, ks)):
        iters.append(it)
        for j, xi in enumerate(xis):
            rows_xi.append(xi)
            rows_k.append(k)
            rows_h.append(h[:, j])
            prov.append("volume")
    pairs = list(pairs or [])
    if pairs and mesh is None:
        raise ValueError("boundary rows need a mesh")

    def pair_rows(pair):
        xi, zp = pair
        mu = _converged_mu(pots, zp.k, settings)
        d = boundary_decomposition(xi, zp, mu, pots, mesh)
        return d["h_volume"], d["h_boundary"], d["defect"]

    cross, defects = [], []
    for (xi, zp), (hv, hb, defect) in zip(pairs, mapper(pair_rows, pairs)):
        defects.append(defect)
        for h, p in ((hv, "volume"), (hb, "boundary")):
            rows_xi.append(np.asarray(xi, float))
            rows_k.append(zp.k)
            rows_h.append(h)
            prov.append(p)
        nv = np.linalg.norm(hv)
        cross.append(float(np.linalg.norm(hb - hv) / nv) if nv > 0 else float(np.linalg.norm(hb)))
    meta = {
        "phantom": ph.to_dict(),
        "grid": grid.to_dict(),
        "solver": {"tol": settings.tol, "max_iter": settings.max_iter},
        "iterations": iters,
    }
    if cross:
        meta["boundary_volume_mismatch"] = {"max": max(cross), "median": float(np.median(cross)), "values": cross}
        meta["clifford_green_defect"] = {"max": max(defects), "median": float(np.median(defects)), "values": defects}
    h = np.array(rows_h).T.reshape(4, -1)
    return ScatteringTable(np.array(rows_xi).reshape(-1, 3), np.array(rows_k).reshape(-1, 3), h, prov, meta)
