"""Property suites run by ``quatcalderon verify``.

Each suite returns a list of :class:`Check` records.  A check passes when its
measured value is strictly below its tolerance; tolerances can be overridden
by name, so setting any tolerance to zero forces that check to fail.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .calculus import (
    borel_pompeiu_residual,
    icosphere,
    projector,
    random_surface_density,
    right_inverse_residual,
    singular_boundary,
)
from .cgo import fd_monogenicity, make_zeta
from .consistency import conductivity_residual, dirac_residual, phi_from_u, solve_conductivity
from .dirac import potentials_from_gamma, probe_norm, solve_mu
from .errors import DivisionByZeroError, ZeroDivisorError
from .grid import Bump, Grid3, Phantom, QField, default_phantom, mollifier, radial_window, sample_phantom
from .quat import herm, qconj, qinv, qmul
from .recon import ANNULUS_CONSTANT, AnnulusRule, gamma_from_q2, inverse_i_xi, qhat_annulus
from .scatter import admissibility_defect, admissible_pairs, boundary_decomposition, h_volume

DEFAULT_TOLERANCES = {
    "algebra.product_table": 1e-14,
    "algebra.associativity": 1e-14,
    "algebra.conjugation_reverses_products": 1e-14,
    "algebra.hermitian_reverses_products": 1e-14,
    "algebra.norm_multiplicative": 1e-14,
    "algebra.inverse": 1e-12,
    "algebra.null_quaternion_not_inverted": 0.5,
    "calculus.right_inverse_T": 0.1,
    "calculus.right_inverse_Tbar": 0.1,
    "calculus.borel_pompeiu": 0.05,
    "calculus.projector_idempotent": 0.05,
    "calculus.single_layer_of_one": 0.05,
    "cgo.monogenicity": 1e-6,
    "cgo.null_vector": 1e-14,
    "cgo.null_quaternion": 1e-14,
    "dirac.trivial_potential": 1e-15,
    "dirac.converges_at_k32": 0.5,
    "dirac.probe_norm_decreasing": 0.5,
    "scatter.admissibility": 1e-10,
    "scatter.trivial_data": 1e-15,
    "scatter.clifford_green_defect": 5e-3,
    "recon.annulus_constant": 1e-2,
    "recon.synthetic_i_xi": 1e-2,
    "recon.trivial_gamma": 1e-6,
    "recon.zero_frequency_rejected": 0.5,
    "consistency.conductivity": 1e-8,
    "consistency.dirac_first": 0.05,
    "consistency.dirac_second": 0.05,
    "consistency.phi_symmetry": 1e-12,
    "consistency.negative_control_detected": 0.5,
}


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""


class _Recorder:
    def __init__(self, tolerances: dict):
        self.tol = {**DEFAULT_TOLERANCES, **tolerances}
        self.checks: list[Check] = []

    def add(self, name: str, value: float, detail: str = "") -> None:
        tol = float(self.tol[name])
        value = float(value)
        self.checks.append(Check(name, value, tol, bool(value < tol), detail))


def _random_quats(rng, count: int) -> np.ndarray:
    return rng.standard_normal((4, count)) + 1j * rng.standard_normal((4, count))


def _structure_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product through the table ``e_i e_j = s e_m``, independent of :func:`qmul`."""
    table = {
        (1, 1): (-1, 0), (2, 2): (-1, 0), (3, 3): (-1, 0),
        (1, 2): (1, 3), (2, 1): (-1, 3),
        (2, 3): (1, 1), (3, 2): (-1, 1),
        (3, 1): (1, 2), (1, 3): (-1, 2),
    }
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=complex)
    for i in range(4):
        for j in range(4):
            if i == 0 or j == 0:
                sign, m = 1, i + j
            else:
                sign, m = table[(i, j)]
            out[m] += sign * a[i] * b[j]
    return out


def _rel(a, b) -> float:
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def suite_algebra(rec: _Recorder, seed: int) -> None:
    rng = np.random.default_rng(seed)
    n = 10_000
    a, b, c = (_random_quats(rng, n) for _ in range(3))
    ab = qmul(a, b)
    rec.add("algebra.product_table", _rel(ab, _structure_product(a, b)))
    rec.add("algebra.associativity", _rel(qmul(ab, c), qmul(a, qmul(b, c))))
    rec.add("algebra.conjugation_reverses_products", _rel(qconj(ab), qmul(qconj(b), qconj(a))))
    rec.add("algebra.hermitian_reverses_products", _rel(herm(ab), qmul(herm(b), herm(a))))
    na, nb, nab = (np.sum(q * q, axis=0) for q in (a, b, ab))
    rec.add("algebra.norm_multiplicative", _rel(nab, na * nb))
    one = np.zeros_like(a)
    one[0] = 1.0
    inv = qinv(a)
    rec.add("algebra.inverse", max(_rel(qmul(a, inv), one), _rel(qmul(inv, a), one)))
    z = np.array([1.0, 1j, 0.0, 0.0])
    try:
        qinv(z)
        rec.add("algebra.null_quaternion_not_inverted", 1.0, "1 + i e1 was inverted")
    except ZeroDivisorError:
        rec.add("algebra.null_quaternion_not_inverted", 0.0)


def suite_calculus(rec: _Recorder, seed: int) -> None:
    g = Grid3.cube(24)
    x = g.coords()
    b = mollifier(g.radius((0.05, 0.0, 0.0)), 0.8)
    f = QField(g, np.stack([b, 0.5 * b * x[1], 0.3j * b, 0.2 * b * x[0]]).astype(complex))
    rec.add("calculus.right_inverse_T", right_inverse_residual(f, "T"), "N=24")
    rec.add("calculus.right_inverse_Tbar", right_inverse_residual(f, "Tbar"), "N=24")
    mesh = icosphere(3)
    w = radial_window(g)
    fx = QField.scalar(g, x[0] * w)
    rec.add("calculus.borel_pompeiu", borel_pompeiu_residual(fx, mesh), "f = x0, N=24, level 3")
    rng = np.random.default_rng(seed)
    data = random_surface_density(mesh, rng)
    p1 = projector(data, mesh)
    p2 = projector(p1, mesh)
    rec.add("calculus.projector_idempotent", np.linalg.norm(p2 - p1) / np.linalg.norm(data), "quadratic data, level 3")
    ones = np.zeros((4, len(mesh.areas)), complex)
    ones[0] = 1.0
    s1 = singular_boundary(ones, mesh)
    rec.add("calculus.single_layer_of_one", float(np.max(np.abs(s1[0] - 1.0))), "Sc(S 1) against +1, level 3")


def suite_cgo(rec: _Recorder, seed: int) -> None:
    rng = np.random.default_rng(seed)
    worst_fd = worst_dot = worst_q = 0.0
    for _ in range(200):
        d = rng.standard_normal(3)
        k = d / np.linalg.norm(d) * rng.uniform(0.5, 8.0)
        zp = make_zeta(k)
        x = rng.uniform(-1.0, 1.0, 3)
        worst_fd = max(worst_fd, fd_monogenicity(x, zp))
        dot, q = zp.null_defect()
        scale = np.dot(np.abs(zp.zeta_vec), np.abs(zp.zeta_vec))
        worst_dot = max(worst_dot, abs(dot) / scale)
        worst_q = max(worst_q, q / scale)
    rec.add("cgo.monogenicity", worst_fd, "200 samples, |k| <= 8")
    rec.add("cgo.null_vector", worst_dot)
    rec.add("cgo.null_quaternion", worst_q)


def suite_dirac(rec: _Recorder, seed: int) -> None:
    g = Grid3.cube(32)
    trivial = potentials_from_gamma(QField.scalar(g, np.ones(g.shape)))
    mu = solve_mu(trivial, (0.0, 0.0, 8.0))
    rec.add("dirac.trivial_potential", float(np.max(np.abs(mu.mu1.values - np.eye(4)[0].reshape(4, 1, 1, 1)))))
    pots = potentials_from_gamma(sample_phantom(default_phantom(), g))
    d = np.array([0.3, 0.5, 0.8]) / np.linalg.norm([0.3, 0.5, 0.8])
    mu = solve_mu(pots, 32.0 * d)
    rec.add("dirac.converges_at_k32", 0.0 if mu.converged else 1.0, f"{mu.iterations} sweeps")
    norms = [probe_norm(pots, r * d, seed=seed) for r in (8.0, 16.0, 32.0, 64.0)]
    rises = sum(b >= a for a, b in zip(norms, norms[1:]))
    rec.add("dirac.probe_norm_decreasing", rises, " ".join(f"{v:.3g}" for v in norms))


def suite_scatter(rec: _Recorder, seed: int) -> None:
    pairs = admissible_pairs(20, 4.0, 32.0, seed=seed)
    rec.add("scatter.admissibility", max(admissibility_defect(xi, zp.k, zp.kperp) for xi, zp in pairs))
    g = Grid3.cube(24)
    trivial = potentials_from_gamma(QField.scalar(g, np.ones(g.shape)))
    mu = solve_mu(trivial, (0.0, 0.0, 16.0))
    rec.add("scatter.trivial_data", float(np.max(np.abs(h_volume(np.array([1.0, 2.0, 0.0]), mu, trivial)))))
    pots = potentials_from_gamma(sample_phantom(default_phantom(), g))
    mesh = icosphere(3)
    defects = []
    for xi, zp in pairs[:3]:
        mu = solve_mu(pots, zp.k)
        defects.append(boundary_decomposition(xi, zp, mu, pots, mesh)["defect"])
    rec.add("scatter.clifford_green_defect", max(defects), "N=24, level 3")


def suite_recon(rec: _Recorder, seed: int) -> None:
    rule = AnnulusRule(32.0)
    k, w = rule.nodes()
    rec.add("recon.annulus_constant", abs(np.sum(w) * ANNULUS_CONSTANT - 1.0))
    xi = np.array([1.0, -2.0, 0.5])
    ixi = np.zeros(4, complex)
    ixi[:3] = 1j * xi
    out = qhat_annulus(xi, lambda kj: ixi, rule)
    rec.add("recon.synthetic_i_xi", float(np.max(np.abs(out - np.eye(4)[0]))))
    g = Grid3.cube(24)
    rec_g = gamma_from_q2(QField.zeros(g))
    rec.add("recon.trivial_gamma", float(np.max(np.abs(rec_g.gamma.values[0] - 1.0))))
    try:
        inverse_i_xi(np.zeros(3))
        rec.add("recon.zero_frequency_rejected", 1.0, "xi = 0 was inverted")
    except DivisionByZeroError:
        rec.add("recon.zero_frequency_rejected", 0.0)


def suite_consistency(rec: _Recorder, seed: int) -> None:
    g = Grid3.cube(24)
    gam = sample_phantom(Phantom((Bump((0.1, -0.05, 0.05), 0.6, 0.3),)), g)
    pots = potentials_from_gamma(gam)
    slope = (0.3, 0.5, 0.8)
    u = solve_conductivity(gam, slope)
    phi = phi_from_u(u, gam, slope)
    rec.add("consistency.conductivity", conductivity_residual(u, gam, slope=slope))
    r1, r2 = dirac_residual(phi, pots)
    rec.add("consistency.dirac_first", r1, "N=24")
    rec.add("consistency.dirac_second", r2, "N=24")
    rec.add("consistency.phi_symmetry", float(np.max(np.abs(phi.phi1.values - qconj(phi.phi2.values)))))
    one = QField.scalar(g, np.ones(g.shape))
    bad = QField.scalar(g, radial_window(g) * g.coords()[0] ** 2)
    c = conductivity_residual(bad, one)
    rec.add("consistency.negative_control_detected", 0.0 if c > 0.1 else 1.0, f"residual {c:.3g} for a non-solution")


SUITE_FUNCTIONS: dict[str, Callable[[_Recorder, int], None]] = {
    "algebra": suite_algebra,
    "calculus": suite_calculus,
    "cgo": suite_cgo,
    "dirac": suite_dirac,
    "scatter": suite_scatter,
    "recon": suite_recon,
    "consistency": suite_consistency,
}


def run_suites(names: list[str], seed: int = 0, tolerances: dict | None = None) -> dict:
    """Run the named suites and return a JSON-ready verdict."""
    unknown = set(tolerances or {}) - set(DEFAULT_TOLERANCES)
    if unknown:
        raise KeyError(f"unknown tolerance names: {sorted(unknown)}")
    report = {"passed": True, "seed": seed, "suites": {}}
    for name in names:
        rec = _Recorder(tolerances or {})
        t0 = time.perf_counter()
        SUITE_FUNCTIONS[name](rec, seed)
        ok = all(c.passed for c in rec.checks)
        report["suites"][name] = {
            "passed": ok,
            "seconds": time.perf_counter() - t0,
            "checks": [asdict(c) for c in rec.checks],
        }
        report["passed"] = report["passed"] and ok
    return report
