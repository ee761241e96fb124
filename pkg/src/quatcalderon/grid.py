"""Uniform 3-D grids, quaternion fields, conductivity phantoms and transforms.

Fields are stored as ``complex128`` arrays of shape ``(4, n, n, n)``; axis 0
holds the coefficients of ``1, e1, e2, e3`` and the spatial axes follow the
coordinates ``x0, x1, x2`` in C order.  The grid is periodic for spectral
purposes: nodes sit at ``origin + h * j`` for ``j = 0 .. n-1`` and the box
has side ``n * h``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .errors import PositivityViolation
from .quat import qnorm

DEFAULT_N = 32
DEFAULT_HALF_WIDTH = 1.5
DEFAULT_POSITIVITY = 0.1


@dataclass(frozen=True)
class Grid3:
    origin: tuple[float, float, float]
    h: float
    n: int

    @classmethod
    def cube(cls, n: int = DEFAULT_N, half_width: float = DEFAULT_HALF_WIDTH) -> "Grid3":
        """Periodic grid on ``[-half_width, half_width)^3`` with ``n`` nodes per axis."""
        h = 2.0 * half_width / n
        return cls((-half_width,) * 3, h, n)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n,) * 3

    @property
    def side(self) -> float:
        return self.n * self.h

    @property
    def cell_volume(self) -> float:
        return self.h**3

    def axes(self) -> list[np.ndarray]:
        return [self.origin[a] + self.h * np.arange(self.n) for a in range(3)]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(3, n, n, n)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"))

    def radius(self, center=(0.0, 0.0, 0.0)) -> np.ndarray:
        x = self.coords()
        c = np.asarray(center, dtype=float).reshape(3, 1, 1, 1)
        return np.sqrt(np.sum((x - c) ** 2, axis=0))

    def wavenumbers(self) -> list[np.ndarray]:
        """Angular DFT frequencies per axis (``2 pi fftfreq(n, h)``)."""
        k = 2.0 * np.pi * sfft.fftfreq(self.n, d=self.h)
        return [k, k, k]

    def xi_lattice(self) -> np.ndarray:
        """All DFT frequencies, shape ``(3, n, n, n)`` in FFT order."""
        return np.stack(np.meshgrid(*self.wavenumbers(), indexing="ij"))

    def sub(self, lo: Sequence[int], n: int) -> "Grid3":
        """Cubic sub-grid starting at index triple ``lo`` with ``n`` nodes per axis."""
        origin = tuple(self.origin[a] + self.h * lo[a] for a in range(3))
        return Grid3(origin, self.h, n)

    def to_dict(self) -> dict:
        return {"origin": list(self.origin), "h": self.h, "n": self.n}


@dataclass
class QField:
    """Complex-quaternion field sampled on a :class:`Grid3`."""

    grid: Grid3
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (4,) + self.grid.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid {(4,) + self.grid.shape}"
            )

    @classmethod
    def zeros(cls, grid: Grid3) -> "QField":
        return cls(grid, np.zeros((4,) + grid.shape, dtype=complex))

    @classmethod
    def scalar(cls, grid: Grid3, values) -> "QField":
        out = np.zeros((4,) + grid.shape, dtype=complex)
        out[0] = values
        return cls(grid, out)

    def copy(self) -> "QField":
        return QField(self.grid, self.values.copy())

    def __add__(self, other):
        return QField(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return QField(self.grid, self.values - _vals(other))

    def __mul__(self, c):
        return QField(self.grid, self.values * c)

    __rmul__ = __mul__

    @property
    def sc(self) -> np.ndarray:
        return self.values[0]

    def pointwise_norm(self) -> np.ndarray:
        return qnorm(self.values)

    def l2(self, mask=None) -> float:
        """Grid L2 norm ``sqrt(h^3 sum |f|^2)``, optionally over a mask."""
        sq = np.sum(np.abs(self.values) ** 2, axis=0)
        if mask is not None:
            sq = sq * mask
        return float(np.sqrt(self.grid.cell_volume * np.sum(sq)))

    def linf(self, mask=None) -> float:
        nrm = self.pointwise_norm()
        if mask is not None:
            nrm = np.where(mask, nrm, 0.0)
        return float(np.max(nrm))


def _vals(other):
    return other.values if isinstance(other, QField) else other


# ---------------------------------------------------------------------------
# phantoms


def mollifier(r: np.ndarray, rho: float) -> np.ndarray:
    """``exp(1 - 1/(1 - r^2/rho^2))`` inside ``r < rho``, zero outside."""
    s = np.asarray(r, dtype=float) ** 2 / rho**2
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside]))
    return out


def mollifier_gradient(x: np.ndarray, center, rho: float) -> np.ndarray:
    """Closed-form gradient of :func:`mollifier`, shape ``(3, ...)``."""
    d = x - np.asarray(center, dtype=float).reshape((3,) + (1,) * (x.ndim - 1))
    s = np.sum(d**2, axis=0) / rho**2
    g = np.zeros_like(d)
    inside = s < 1.0
    p = np.exp(1.0 - 1.0 / (1.0 - s[inside]))
    dpds = -p / (1.0 - s[inside]) ** 2
    for a in range(3):
        g[a][inside] = dpds * 2.0 * d[a][inside] / rho**2
    return g


def cone(r: np.ndarray, rho: float) -> np.ndarray:
    """Lipschitz hat ``max(0, 1 - r/rho)``."""
    return np.clip(1.0 - np.asarray(r, dtype=float) / rho, 0.0, None)


@dataclass(frozen=True)
class Bump:
    center: tuple[float, float, float]
    radius: float
    amplitude: complex
    profile: str = "smooth"

    def __post_init__(self):
        if self.profile not in ("smooth", "cone"):
            raise ValueError(f"unknown bump profile {self.profile!r}")
        if self.radius <= 0:
            raise ValueError("bump radius must be positive")

    def shape(self, x: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center, dtype=float).reshape((3,) + (1,) * (x.ndim - 1))
        r = np.sqrt(np.sum((x - c) ** 2, axis=0))
        return mollifier(r, self.radius) if self.profile == "smooth" else cone(r, self.radius)

    def to_dict(self) -> dict:
        a = complex(self.amplitude)
        return {
            "center": list(self.center),
            "radius": self.radius,
            "amplitude": [a.real, a.imag],
            "profile": self.profile,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Bump":
        amp = d["amplitude"]
        if isinstance(amp, (list, tuple)):
            amp = complex(amp[0], amp[1])
        return cls(tuple(float(c) for c in d["center"]), float(d["radius"]), complex(amp), d.get("profile", "smooth"))


@dataclass(frozen=True)
class Phantom:
    """Conductivity ``gamma = 1 - sum_b amplitude_b * profile_b``.

    The amplitude is the depth of the dip below the unit background, so a
    bump of amplitude ``0.3 + 0.1i`` gives ``gamma = 0.7 - 0.1i`` at its
    centre.
    """

    bumps: tuple[Bump, ...] = ()
    positivity: float = DEFAULT_POSITIVITY
    name: str = "phantom"

    def gamma(self, x: np.ndarray) -> np.ndarray:
        g = np.ones(x.shape[1:], dtype=complex)
        for b in self.bumps:
            g = g - b.amplitude * b.shape(x)
        return g

    def gamma_gradient(self, x: np.ndarray) -> np.ndarray:
        """Analytic gradient (smooth bumps only), shape ``(3, ...)``."""
        g = np.zeros(x.shape, dtype=complex)
        for b in self.bumps:
            if b.profile != "smooth":
                raise ValueError("analytic gradient only available for smooth bumps")
            g = g - b.amplitude * mollifier_gradient(x, b.center, b.radius)
        return g

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "positivity": self.positivity,
            "bumps": [b.to_dict() for b in self.bumps],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Phantom":
        return cls(
            tuple(Bump.from_dict(b) for b in d.get("bumps", [])),
            float(d.get("positivity", DEFAULT_POSITIVITY)),
            d.get("name", "phantom"),
        )


def default_phantom() -> Phantom:
    """Single smooth bump of contrast ``0.3 + 0.1i`` used throughout the tests."""
    return Phantom((Bump((0.1, -0.05, 0.05), 0.6, 0.3 + 0.1j),), name="default")


def sample_phantom(ph: Phantom, grid: Grid3) -> QField:
    """Sample ``gamma`` as a scalar-valued field.

    Raises :class:`PositivityViolation` when ``min Re gamma`` falls below
    ``ph.positivity`` and ``ValueError`` when a bump reaches into the
    padding shell (the outer ``n/8`` cells).
    """
    pad = grid.h * (grid.n // 8)
    lo = np.array(grid.origin) + pad
    hi = np.array(grid.origin) + grid.side - grid.h - pad
    for b in ph.bumps:
        c = np.asarray(b.center)
        if np.any(c - b.radius < lo) or np.any(c + b.radius > hi):
            raise ValueError(f"bump at {b.center} with radius {b.radius} reaches the padding shell")
    gamma = ph.gamma(grid.coords())
    low = float(np.min(gamma.real))
    if low < ph.positivity:
        raise PositivityViolation(f"min Re gamma = {low:.4g} < {ph.positivity}")
    return QField.scalar(grid, gamma)


# ---------------------------------------------------------------------------
# windows and masks


def smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def radial_window(grid: Grid3, r_in: float = 1.15, r_out: float = 1.4, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Smooth cutoff equal to 1 for ``r <= r_in`` and 0 for ``r >= r_out``."""
    r = grid.radius(center)
    return 1.0 - smooth_step((r - r_in) / (r_out - r_in))


def ball_fraction(grid: Grid3, radius: float = 1.0, center=(0.0, 0.0, 0.0), sub: int = 4) -> np.ndarray:
    """Fraction of each grid cell (centred on its node) inside a ball."""
    c = np.asarray(center, dtype=float).reshape(3, 1, 1, 1)
    x = grid.coords() - c
    r = np.sqrt(np.sum(x**2, axis=0))
    diag = np.sqrt(3) * grid.h / 2
    frac = (r <= radius).astype(float)
    edge = np.abs(r - radius) <= diag
    if np.any(edge):
        offs = (np.arange(sub) + 0.5) / sub - 0.5
        o = np.stack(np.meshgrid(offs, offs, offs, indexing="ij")).reshape(3, -1) * grid.h
        pts = x[:, edge][:, :, None] + o[:, None, :]
        frac[edge] = np.mean(np.sum(pts**2, axis=0) <= radius**2, axis=1)
    return frac


def padding_shell(grid: Grid3, cells: int | None = None) -> np.ndarray:
    """Boolean mask of the outer ``cells`` layers (default ``n // 8``)."""
    cells = grid.n // 8 if cells is None else cells
    m = np.ones(grid.shape, dtype=bool)
    s = slice(cells, grid.n - cells)
    m[s, s, s] = False
    return m


# ---------------------------------------------------------------------------
# Fourier transforms, continuum normalisation


def _phase(grid: Grid3, xi: np.ndarray) -> np.ndarray:
    o = np.asarray(grid.origin).reshape((3,) + (1,) * (xi.ndim - 1))
    return np.exp(-1j * np.sum(o * xi, axis=0))


def dft3(f: QField, xi=None):
    """Approximate ``int exp(-i x.xi) f(x) dx`` component-wise.

    With ``xi=None`` the transform is evaluated on the full DFT lattice by FFT
    and ``(xi_lattice, values)`` is returned, values of shape
    ``(4, n, n, n)`` in FFT order.  Otherwise ``xi`` has shape ``(3, m)``
    and the ``h^3``-weighted sum is evaluated directly, returning ``(4, m)``.
    """
    g = f.grid
    if xi is None:
        lattice = g.xi_lattice()
        vals = sfft.fftn(f.values, axes=(1, 2, 3)) * g.cell_volume * _phase(g, lattice)
        return lattice, vals
    xi = np.asarray(xi, dtype=float).reshape(3, -1)
    x = g.coords().reshape(3, -1)
    vals = f.values.reshape(4, -1)
    nz = np.any(vals != 0, axis=0)
    x, vals = x[:, nz], vals[:, nz]
    out = np.zeros((4, xi.shape[1]), dtype=complex)
    step = max(1, 2_000_000 // max(1, x.shape[1]))
    for s in range(0, xi.shape[1], step):
        e = np.exp(-1j * (xi[:, s : s + step].T @ x))
        out[:, s : s + step] = (vals @ e.T) * g.cell_volume
    return out


def idft3(values: np.ndarray, grid: Grid3) -> QField:
    """Inverse of the lattice :func:`dft3`, ``(2 pi)^-3 sum exp(i x.xi) fhat (dxi)^3``."""
    lattice = grid.xi_lattice()
    spec = np.asarray(values, dtype=complex) / _phase(grid, lattice)
    return QField(grid, sfft.ifftn(spec, axes=(1, 2, 3)) / grid.cell_volume)


def spectral_gradient(values: np.ndarray, grid: Grid3) -> np.ndarray:
    """Spectral partial derivatives of a ``(..., n, n, n)`` array.

    Returns an array with a new leading axis of length 3.  The Nyquist mode
    of each odd derivative is dropped.
    """
    spec = sfft.fftn(values, axes=(-3, -2, -1))
    out = []
    for a, k in enumerate(grid.wavenumbers()):
        kk = 1j * k.copy()
        if grid.n % 2 == 0:
            kk[grid.n // 2] = 0.0
        shape = [1, 1, 1]
        shape[a] = grid.n
        out.append(sfft.ifftn(spec * kk.reshape(shape), axes=(-3, -2, -1)))
    return np.stack(out)


def spectral_laplacian(values: np.ndarray, grid: Grid3) -> np.ndarray:
    xi = grid.xi_lattice()
    spec = sfft.fftn(values, axes=(-3, -2, -1))
    return sfft.ifftn(-np.sum(xi**2, axis=0) * spec, axes=(-3, -2, -1))


# ---------------------------------------------------------------------------
# S-norm  L^inf_x ( L^p_k ( |k| > R ) )


@dataclass
class SNorm:
    p: float = 4.0
    R: float = 0.0
    ks: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.p <= 2:
            raise ValueError("the S-norm needs p > 2")
        self.ks = np.asarray(self.ks, dtype=float).reshape(-1, 3)
        if self.weights is None:
            self.weights = np.ones(len(self.ks))
        self.weights = np.asarray(self.weights, dtype=float)

    def selection(self) -> np.ndarray:
        return np.linalg.norm(self.ks, axis=1) > self.R


def snorm(values, s: SNorm) -> float:
    """``sup_x ( sum_k w_k |f(x, k)|^p )^(1/p)`` over the samples with ``|k| > R``.

    ``values`` is indexed ``[k, ...]``; each entry is either a scalar array
    or a quaternion array (leading axis 4), in which case the pointwise
    quaternion norm is used.
    """
    sel = s.selection()
    if not np.any(sel):
        raise ValueError("no k samples beyond the cutoff R")
    vals = np.asarray(values)
    vals = vals[sel]
    w = s.weights[sel]
    if vals.ndim >= 2 and vals.shape[1] == 4:
        mag = np.sqrt(np.sum(np.abs(vals) ** 2, axis=1))
    else:
        mag = np.abs(vals)
    mag = mag.reshape(len(w), -1)
    acc = np.sum(w[:, None] * mag**s.p, axis=0)
    return float(np.max(acc) ** (1.0 / s.p))


# ---------------------------------------------------------------------------
# binary field dumps

_COMPONENTS = ["re0", "re1", "re2", "re3", "im0", "im1", "im2", "im3"]


def dump_field(f: QField, path, extra: dict | None = None) -> None:
    """Write a JSON header line followed by ``8 n^3`` little-endian doubles."""
    g = f.grid
    header = {
        "dims": [g.n] * 3,
        "spacing": g.h,
        "origin": list(g.origin),
        "layout": "planar",
        "components": _COMPONENTS,
    }
    if extra:
        header.update(extra)
    planes = np.concatenate([f.values.real, f.values.imag]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode("utf-8"))
        fh.write(np.ascontiguousarray(planes).tobytes(order="C"))


def load_field(path) -> tuple[QField, dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        raw = np.frombuffer(fh.read(), dtype="<f8")
    dims = tuple(header["dims"])
    if header.get("layout") != "planar" or len(set(dims)) != 1:
        raise ValueError(f"unsupported field dump in {Path(path).name}")
    planes = raw.reshape((8,) + dims)
    grid = Grid3(tuple(header["origin"]), float(header["spacing"]), dims[0])
    return QField(grid, planes[:4] + 1j * planes[4:]), header
