"""Dirac-system potentials and the integral equations for the CGO amplitudes.

For a scalar conductivity ``gamma`` the potentials are

    q2 = -(1/2) D gamma / gamma,     q1 = bar(q2),

and the amplitudes ``mu1``, ``mu2`` of the exponentially growing solutions
solve

    mu1 = 1 + T[ exp(-i x.k) mu2 q1 ],     mu2 = Tbar[ exp(i x.k) mu1 q2 ].

The modulated factor ``nu2 = exp(-i x.k) mu2`` is smooth on the grid even
when ``|k|`` exceeds the Nyquist frequency, so the solver iterates on
``(mu1, nu2)``:

    nu2 = Tbar_k[ mu1 q2 ],    mu1 = 1 + T[ nu2 q1 ],

where ``Tbar_k g = exp(-i x.k) Tbar[exp(i x.k) g]`` is applied through its
shifted Fourier symbol.  One sweep applies ``M1 = T[ Tbar_k[ . q2] q1 ]`` once.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import binary_dilation

from .calculus import FreeSpaceTeodorescu, free_space_operator
from .cgo import modulation
from .errors import NonContractive, PositivityViolation
from .grid import Grid3, Phantom, QField, spectral_gradient
from .quat import embed, qconj, qmul

SUPPORT_DILATION = 2
STALL_LIMIT = 3


@dataclass
class DiracPotentials:
    """``q1 = bar(q2)`` and ``q2`` on a common grid, exactly zero off ``support``."""

    q1: QField
    q2: QField
    support: np.ndarray

    @property
    def grid(self) -> Grid3:
        return self.q2.grid

    @property
    def trivial(self) -> bool:
        return not np.any(self.support)


def _support_mask(gamma0: np.ndarray, dilation: int) -> np.ndarray:
    mask = gamma0 != 1.0
    if dilation > 0 and np.any(mask):
        mask = binary_dilation(mask, iterations=dilation)
    return mask


def potentials_from_gamma(gamma: QField, dilation: int = SUPPORT_DILATION) -> DiracPotentials:
    """Spectral ``q2 = -(1/2) D gamma / gamma`` and ``q1 = bar(q2)``.

    The potentials are set to zero outside a ``dilation``-cell neighbourhood
    of ``{gamma != 1}``, which removes the spectral ripple of the derivative
    and keeps the support exactly compact.
    """
    vals = gamma.values
    if np.any(vals[1:] != 0):
        raise ValueError("gamma must be scalar-valued")
    g0 = vals[0]
    if np.min(g0.real) <= 0:
        raise PositivityViolation(f"min Re gamma = {np.min(g0.real):.4g} is not positive")
    grid = gamma.grid
    q2 = -0.5 * embed(spectral_gradient(g0, grid)) / g0
    support = _support_mask(g0, dilation)
    q2 = q2 * support
    return DiracPotentials(QField(grid, qconj(q2)), QField(grid, q2), support)


def analytic_potentials(ph: Phantom, grid: Grid3) -> DiracPotentials:
    """Closed-form potentials from the analytic phantom gradient."""
    x = grid.coords()
    gamma = ph.gamma(x)
    q2 = -0.5 * embed(ph.gamma_gradient(x)) / gamma
    support = np.any(q2 != 0, axis=0)
    return DiracPotentials(QField(grid, qconj(q2)), QField(grid, q2), support)


# ---------------------------------------------------------------------------
# active box


@dataclass(frozen=True)
class ActiveBox:
    """Cubic sub-grid holding the support of the potentials."""

    lo: tuple[int, int, int]
    n: int
    grid: Grid3

    @property
    def slices(self):
        return tuple(slice(l, l + self.n) for l in self.lo)

    def restrict(self, values: np.ndarray) -> np.ndarray:
        return values[(slice(None),) + self.slices]

    def extend(self, values: np.ndarray, full: Grid3) -> np.ndarray:
        out = np.zeros((values.shape[0],) + full.shape, dtype=complex)
        out[(slice(None),) + self.slices] = values
        return out

    @property
    def operator(self) -> FreeSpaceTeodorescu:
        return free_space_operator(self.n, self.grid.h)


def active_box(pots: DiracPotentials, margin: int = 1) -> ActiveBox | None:
    """Smallest cube (plus ``margin`` cells) containing the support, or None."""
    if pots.trivial:
        return None
    full = pots.grid
    idx = np.nonzero(pots.support)
    lo = np.array([i.min() for i in idx]) - margin
    hi = np.array([i.max() for i in idx]) + margin + 1
    n = int(np.max(hi - lo))
    n += n % 2
    n = min(n, full.n)
    lo = np.clip(lo, 0, full.n - n)
    return ActiveBox(tuple(int(v) for v in lo), n, full.sub(lo, n))


# ---------------------------------------------------------------------------
# the operators M1, M2


def _m1(f: np.ndarray, q1: np.ndarray, q2: np.ndarray, k, op: FreeSpaceTeodorescu) -> np.ndarray:
    return op.apply(qmul(op.apply(qmul(f, q2), "Tbar", k), q1), "T")


def _m2(f: np.ndarray, q1: np.ndarray, q2: np.ndarray, k, op: FreeSpaceTeodorescu) -> np.ndarray:
    return op.apply(qmul(op.apply(qmul(f, q1), "T", -np.asarray(k)), q2), "Tbar")


def apply_M(f: QField, which: int, pots: DiracPotentials, k) -> QField:
    """Apply ``M1`` or ``M2`` to ``f`` on the full grid.

    ``M1 f = T[ e^{-ix.k} Tbar[ e^{ix.k} f q2 ] q1 ]`` and
    ``M2 f = Tbar[ e^{ix.k} T[ e^{-ix.k} f q1 ] q2 ]``.  The modulations
    are folded into shifted Fourier symbols, so no oscillatory factor is
    sampled.
    """
    k = np.asarray(k, dtype=float)
    op = free_space_operator(f.grid.n, f.grid.h)
    q1, q2 = pots.q1.values, pots.q2.values
    if which == 1:
        return QField(f.grid, _m1(f.values, q1, q2, k, op))
    if which == 2:
        return QField(f.grid, _m2(f.values, q1, q2, k, op))
    raise ValueError("which must be 1 or 2")


# ---------------------------------------------------------------------------
# Neumann solver


@dataclass
class MuPair:
    """Solution of the amplitude equations at one ``k``.

    ``nu2 = exp(-i x.k) mu2`` is the smooth demodulated second amplitude;
    ``mu2`` itself is available pointwise through :meth:`mu2`.
    """

    mu1: QField
    nu2: QField
    k: np.ndarray
    log: list = field(default_factory=list)
    converged: bool = True

    def mu2(self) -> QField:
        g = self.nu2.grid
        return QField(g, modulation(g.coords(), self.k, +1) * self.nu2.values)

    @property
    def iterations(self) -> int:
        return len(self.log)


@dataclass
class BoxSolution:
    """Amplitudes on the active box only (enough for volume scattering data)."""

    box: ActiveBox
    mu1: np.ndarray
    nu2: np.ndarray
    k: np.ndarray
    log: list
    converged: bool


def iterate_on_box(pots: DiracPotentials, k, tol: float = 1e-8, max_iter: int = 50) -> BoxSolution | None:
    """Neumann iteration for ``(mu1, nu2)`` restricted to the active box.

    The residual of sweep ``j`` is the norm of the update divided by the
    norm of the first correction, so it behaves like ``rho^(j-1)`` for a
    contraction of rate ``rho``.  Three consecutive increases raise
    :class:`NonContractive`.  Returns None for trivial potentials.
    """
    k = np.asarray(k, dtype=float)
    box = active_box(pots)
    if box is None:
        return None
    op = box.operator
    q1 = box.restrict(pots.q1.values)
    q2 = box.restrict(pots.q2.values)
    one = np.zeros((4,) + box.grid.shape, dtype=complex)
    one[0] = 1.0
    mu1 = one.copy()
    nu2 = np.zeros_like(one)
    log: list[float] = []
    first = None
    rising = 0
    converged = False
    for _ in range(max_iter):
        nu2_new = op.apply(qmul(mu1, q2), "Tbar", k)
        mu1_new = one + op.apply(qmul(nu2_new, q1), "T")
        upd = np.sqrt(np.sum(np.abs(mu1_new - mu1) ** 2) + np.sum(np.abs(nu2_new - nu2) ** 2))
        mu1, nu2 = mu1_new, nu2_new
        if first is None:
            first = upd
        res = float(upd / first) if first > 0 else 0.0
        log.append(res)
        if res < tol:
            converged = True
            break
        rising = rising + 1 if len(log) > 1 and res > log[-2] else 0
        if rising >= STALL_LIMIT:
            raise NonContractive(f"Neumann series diverges at |k| = {np.linalg.norm(k):.4g}", k=k, log=log)
    return BoxSolution(box, mu1, nu2, k, log, converged)


def solve_mu(pots: DiracPotentials, k, tol: float = 1e-8, max_iter: int = 50) -> MuPair:
    """Solve the amplitude equations at ``k`` and evaluate them on the whole grid.

    See :func:`iterate_on_box` for the iteration and its stopping rules; the
    final amplitudes are extended by one more application of each operator.
    """
    k = np.asarray(k, dtype=float)
    full = pots.grid
    sol = iterate_on_box(pots, k, tol, max_iter)
    if sol is None:
        one = QField.scalar(full, np.ones(full.shape))
        return MuPair(one, QField.zeros(full), k, [0.0], True)
    box = sol.box
    q1 = box.restrict(pots.q1.values)
    q2 = box.restrict(pots.q2.values)
    full_op = free_space_operator(full.n, full.h)
    nu2_full = full_op.apply(box.extend(qmul(sol.mu1, q2), full), "Tbar", k)
    mu1_full = full_op.apply(box.extend(qmul(sol.nu2, q1), full), "T")
    mu1_full[0] += 1.0
    return MuPair(QField(full, mu1_full), QField(full, nu2_full), k, sol.log, sol.converged)


def first_order_mu1(pots: DiracPotentials, k) -> QField:
    """``1 + M1 1``: the first Neumann iterate, with the solver's discretization."""
    return solve_mu(pots, k, tol=0.0, max_iter=1).mu1


def write_iteration_log(rows, path) -> None:
    """CSV with columns ``k0, k1, k2, iter, residual``; ``rows`` holds MuPair objects."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k0", "k1", "k2", "iter", "residual"])
        for mu in rows:
            for i, r in enumerate(mu.log, start=1):
                w.writerow([*(f"{v:.17g}" for v in mu.k), i, f"{r:.17g}"])


# ---------------------------------------------------------------------------
# contraction probes


def probe_norm(pots: DiracPotentials, k, which: int = 1, starts: int = 10, iters: int = 6, seed: int = 0) -> float:
    """Power-type estimate of ``||M_which||`` as an operator on ``L2(support)``.

    Each random start is pushed through ``iters`` normalised applications;
    the largest amplification ratio seen over all starts is returned (a lower
    bound of the operator norm).
    """
    box = active_box(pots)
    if box is None:
        return 0.0
    op = box.operator
    q1 = box.restrict(pots.q1.values)
    q2 = box.restrict(pots.q2.values)
    mask = box.restrict(pots.support[None])[0]
    apply = _m1 if which == 1 else _m2
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(starts):
        f = (rng.standard_normal((4,) + mask.shape) + 1j * rng.standard_normal((4,) + mask.shape)) * mask
        f /= np.linalg.norm(f)
        for _ in range(iters):
            g = apply(f, q1, q2, k, op) * mask
            ratio = float(np.linalg.norm(g))
            best = max(best, ratio)
            if ratio == 0:
                break
            f = g / ratio
    return best


def rhs_magnitudes(pots: DiracPotentials, k) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise norms of ``M1 1`` and ``Tbar[e^{ix.k} q2]`` on the full grid.

    ``|Tbar[e^{ix.k} q2]| = |Tbar_k q2|`` pointwise, so no oscillatory
    factor is sampled.
    """
    g = pots.grid
    op = free_space_operator(g.n, g.h)
    one = np.zeros((4,) + g.shape, dtype=complex)
    one[0] = 1.0
    m1 = _m1(one, pots.q1.values, pots.q2.values, np.asarray(k, float), op)
    t2 = op.apply(pots.q2.values, "Tbar", np.asarray(k, float))
    return np.sqrt(np.sum(np.abs(m1) ** 2, 0)), np.sqrt(np.sum(np.abs(t2) ** 2, 0))


def contraction_threshold(
    pots: DiracPotentials,
    direction=(0.0, 0.0, 1.0),
    lo: float = 0.5,
    hi: float = 64.0,
    rel_tol: float = 0.05,
    tol: float = 1e-8,
    max_iter: int = 50,
) -> float:
    """Smallest ``|k|`` (to ``rel_tol``) along ``direction`` where the solver converges.

    Bisection assumes convergence is monotone in ``|k|``; returns ``lo`` if
    the solver already converges there and ``inf`` if it fails at ``hi``.
    """
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)

    def ok(r):
        try:
            return solve_mu(pots, r * d, tol, max_iter).converged
        except NonContractive:
            return False

    if pots.trivial or ok(lo):
        return lo
    if not ok(hi):
        return float("inf")
    while hi / lo > 1 + rel_tol:
        mid = np.sqrt(lo * hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi
