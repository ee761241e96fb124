"""Cauchy-Riemann operators, Teodorescu transforms and Cauchy boundary integrals.

``D = d0 + e1 d1 + e2 d2`` and ``Dbar = d0 - e1 d1 - e2 d2`` act from the
left.  Their right inverses are volume convolutions with the generalized
Cauchy kernels

    T:     K(d)    = bar(d) / (4 pi |d|^3)
    Tbar:  Kbar(d) =     d  / (4 pi |d|^3),     d = x - y,

where the kernel multiplies the density on the LEFT.  Two discretizations are
provided: a lattice sum of the sampled kernel (self-offset 0), and a
free-space spectral convolution built on the truncated Laplace kernel whose
Fourier symbol is known in closed form.  The spectral one accepts a
modulation vector ``m`` and then applies ``g -> exp(-i x.m) T[exp(i x.m) g]``
without ever sampling ``exp(i x.m)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement
from pathlib import Path

import numpy as np
import scipy.fft as sfft
from scipy.ndimage import map_coordinates
from scipy.spatial import cKDTree

from .errors import TooCloseToBoundary
from .grid import Grid3, QField, ball_fraction, radial_window, spectral_gradient
from .quat import embed, qconj, qmul

OMEGA = 4.0 * np.pi

_E1 = np.array([0, 1, 0, 0], dtype=complex).reshape(4, 1, 1, 1)
_E2 = np.array([0, 0, 1, 0], dtype=complex).reshape(4, 1, 1, 1)


def _d_values(values: np.ndarray, grid: Grid3, variant: str) -> np.ndarray:
    g = spectral_gradient(values, grid)
    sign = {"D": 1.0, "Dbar": -1.0}[variant]
    return g[0] + sign * (qmul(_E1, g[1]) + qmul(_E2, g[2]))


def apply_D(f: QField, variant: str = "D") -> QField:
    """Spectral ``D f`` or ``Dbar f`` on the periodic grid."""
    return QField(f.grid, _d_values(f.values, f.grid, variant))


def laplacian(f: QField) -> QField:
    """``D Dbar f`` (equal to the Laplacian, computed through the D operators)."""
    return apply_D(apply_D(f, "Dbar"), "D")


# ---------------------------------------------------------------------------
# volume operators


@dataclass(frozen=True)
class CauchyKernel:
    """Kernel samples on the offset lattice ``h * (-(n-1) .. n-1)^3``.

    Stored in FFT wrap-around order on a ``(2n)^3`` array so that a zero-padded
    FFT gives the aperiodic lattice convolution.  ``E(0) = 0``.
    """

    n: int
    h: float
    variant: str
    values: np.ndarray

    @classmethod
    def build(cls, n: int, h: float, variant: str = "T") -> "CauchyKernel":
        idx = np.arange(2 * n)
        off = np.where(idx < n, idx, idx - 2 * n) * h
        d = np.stack(np.meshgrid(off, off, off, indexing="ij"))
        r3 = np.sum(d**2, axis=0) ** 1.5
        r3[0, 0, 0] = np.inf
        # offset index n (= -n h) is never reached by an n-point convolution
        r3[n, :, :] = r3[:, n, :] = r3[:, :, n] = np.inf
        k = embed(d) / (OMEGA * r3)
        if variant == "T":
            k = qconj(k)
        elif variant != "Tbar":
            raise ValueError(f"unknown variant {variant!r}")
        return cls(n, h, variant, k)

    def at(self, offset_index) -> np.ndarray:
        i = tuple(int(o) % (2 * self.n) for o in offset_index)
        return self.values[(slice(None),) + i]


@lru_cache(maxsize=16)
def _lattice_kernel_hat(n: int, h: float, variant: str) -> np.ndarray:
    k = CauchyKernel.build(n, h, variant)
    return sfft.fftn(k.values[:3].real, axes=(1, 2, 3))


def _paravector_mul(s: np.ndarray, f: np.ndarray) -> np.ndarray:
    """``s f`` where ``s`` has only the components 1, e1, e2 (leading axis 3)."""
    s0, s1, s2 = s
    f0, f1, f2, f3 = f
    return np.stack(
        [
            s0 * f0 - s1 * f1 - s2 * f2,
            s0 * f1 + s1 * f0 + s2 * f3,
            s0 * f2 - s1 * f3 + s2 * f0,
            s0 * f3 + s1 * f2 - s2 * f1,
        ]
    )


def lattice_teodorescu(values: np.ndarray, grid: Grid3, variant: str = "T") -> np.ndarray:
    n = grid.n
    khat = _lattice_kernel_hat(n, grid.h, variant)
    fhat = sfft.fftn(values, s=(2 * n,) * 3, axes=(1, 2, 3))
    out = sfft.ifftn(_paravector_mul(khat, fhat), axes=(1, 2, 3))
    return out[:, :n, :n, :n] * grid.cell_volume


def truncated_green_hat(s: np.ndarray, L: float) -> np.ndarray:
    """Fourier transform of ``1/(4 pi |x|)`` restricted to ``|x| < L``."""
    out = np.empty_like(s)
    small = s * L < 1e-4
    out[small] = L**2 / 2.0 - (s[small] ** 2) * L**4 / 24.0
    ss = s[~small]
    out[~small] = 2.0 * np.sin(0.5 * L * ss) ** 2 / ss**2
    return out


class FreeSpaceTeodorescu:
    """Free-space ``T`` / ``Tbar`` for densities supported in a cubic grid.

    The truncated kernel has radius ``L`` equal to the box diagonal and the
    FFT lattice is padded ``pad`` times (``pad >= 1 + sqrt 3``), which makes
    the periodic convolution coincide with the free-space one on the box.
    Symbols are cached per ``(variant, shift)``.
    """

    def __init__(self, n: int, h: float, pad: int = 3):
        if pad < 1 + np.sqrt(3):
            raise ValueError("padding factor must be at least 1 + sqrt(3)")
        self.n = n
        self.h = h
        self.m = pad * n
        self.L = np.sqrt(3.0) * n * h
        k = 2.0 * np.pi * sfft.fftfreq(self.m, d=h)
        self._k = k
        self._cache: dict = {}

    def symbol(self, variant: str, shift=(0.0, 0.0, 0.0)) -> np.ndarray:
        key = (variant, tuple(float(s) for s in shift))
        if key in self._cache:
            return self._cache[key]
        if len(self._cache) >= (8 if self.m <= 64 else 3):
            self._cache.clear()
        k = self._k
        xi = [k.reshape(-1, 1, 1) + key[1][0], k.reshape(1, -1, 1) + key[1][1], k.reshape(1, 1, -1) + key[1][2]]
        s = np.sqrt(xi[0] ** 2 + xi[1] ** 2 + xi[2] ** 2)
        g = truncated_green_hat(s, self.L)
        sign = -1.0 if variant == "T" else 1.0
        if variant not in ("T", "Tbar"):
            raise ValueError(f"unknown variant {variant!r}")
        sym = np.stack(
            [
                -1j * xi[0] * g,
                -1j * sign * xi[1] * g,
                -1j * sign * xi[2] * g,
            ]
        )
        self._cache[key] = sym
        return sym

    def apply(self, values: np.ndarray, variant: str = "T", shift=(0.0, 0.0, 0.0)) -> np.ndarray:
        n, m = self.n, self.m
        # pruned transforms: pad one axis at a time, crop one axis at a time
        fhat = values
        for ax in (3, 2, 1):
            fhat = sfft.fft(fhat, n=m, axis=ax)
        out = _paravector_mul(self.symbol(variant, shift), fhat)
        for ax in (1, 2, 3):
            out = sfft.ifft(out, axis=ax)
            out = out[(slice(None),) * ax + (slice(0, n),)]
        return out


@lru_cache(maxsize=4)
def free_space_operator(n: int, h: float) -> FreeSpaceTeodorescu:
    return FreeSpaceTeodorescu(n, h)


def teodorescu(f: QField, variant: str = "T", method: str = "lattice") -> QField:
    """``T f`` (right inverse of ``D``) or ``Tbar f`` (right inverse of ``Dbar``).

    ``method="lattice"`` sums the sampled kernel over all node pairs with the
    self-offset dropped; ``method="spectral"`` uses :class:`FreeSpaceTeodorescu`.
    """
    if method == "lattice":
        vals = lattice_teodorescu(f.values, f.grid, variant)
    elif method == "spectral":
        vals = free_space_operator(f.grid.n, f.grid.h).apply(f.values, variant)
    else:
        raise ValueError(f"unknown method {method!r}")
    return QField(f.grid, vals)


def right_inverse_residual(f: QField, variant: str = "T", method: str = "lattice", radius: float = 1.0) -> float:
    """Relative L2 residual of ``D T f = f`` (or ``Dbar Tbar f = f``) on ``|x| <= radius``.

    ``T f`` is not periodic, so it is cut off smoothly outside the unit ball
    before the spectral derivative is taken; ``f`` should be supported
    inside ``|x| < 1.15`` where the cut-off equals one.
    """
    d = {"T": "D", "Tbar": "Dbar"}[variant]
    grid = f.grid
    tf = teodorescu(f, variant, method)
    dtf = apply_D(tf * radial_window(grid), d)
    mask = grid.radius() <= radius
    return (dtf - f).l2(mask) / f.l2(mask)


# ---------------------------------------------------------------------------
# boundary meshes


@dataclass
class BoundaryMesh:
    """Flat-triangle surface with outward normals."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        tri = self.vertices[self.faces]
        self.triangles = tri
        self.centroids = tri.mean(axis=1)
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        area2 = np.linalg.norm(cross, axis=1)
        self.areas = 0.5 * area2
        self.normals = cross / area2[:, None]
        inside = self.vertices.mean(axis=0)
        flip = np.sum(self.normals * (self.centroids - inside), axis=1) < 0
        if np.any(flip):
            self.faces = self.faces.copy()
            self.faces[flip] = self.faces[flip][:, ::-1]
            self.normals[flip] *= -1
            self.triangles = self.vertices[self.faces]
        self.alpha = embed(self.normals.T)
        edges = np.linalg.norm(self.triangles - np.roll(self.triangles, 1, axis=1), axis=2)
        self.edge_lengths = edges.max(axis=1)

    @property
    def resolution(self) -> float:
        return float(np.mean(self.edge_lengths))

    @property
    def total_area(self) -> float:
        return float(np.sum(self.areas))

    def save(self, path) -> None:
        """Triangle soup: one line per triangle, nine floats."""
        np.savetxt(path, self.triangles.reshape(-1, 9), fmt="%.17g")

    @classmethod
    def load(cls, path) -> "BoundaryMesh":
        soup = np.loadtxt(path, ndmin=2).reshape(-1, 3, 3)
        verts, inv = np.unique(np.round(soup.reshape(-1, 3), 12), axis=0, return_inverse=True)
        return cls(verts, inv.reshape(-1, 3))

    def is_watertight(self) -> bool:
        e = np.sort(np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]]), axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return bool(np.all(counts == 2))


def icosphere(level: int = 4, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> BoundaryMesh:
    """Icosahedron refined ``level`` times, ``20 * 4**level`` triangles."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    v = np.array(verts, dtype=float)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array(faces, dtype=int)
    for _ in range(level):
        v, f = _subdivide(v, f)
    return BoundaryMesh(v * radius + np.asarray(center, dtype=float), f)


def _subdivide(v, f):
    edges = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)
    mids = v[uniq[:, 0]] + v[uniq[:, 1]]
    mids /= np.linalg.norm(mids, axis=1, keepdims=True)
    nv = len(v)
    m = inv.reshape(3, -1).T + nv
    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    ab, bc, ca = m[:, 0], m[:, 1], m[:, 2]
    nf = np.concatenate(
        [np.stack([a, ab, ca], 1), np.stack([b, bc, ab], 1), np.stack([c, ca, bc], 1), np.stack([ab, bc, ca], 1)]
    )
    return np.concatenate([v, mids]), nf


def _point_triangle_distance(p: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Distance from one point to each triangle of ``tri`` (shape ``(m, 3, 3)``)."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab, ac, ap = b - a, c - a, p - a
    d00 = np.sum(ab * ab, 1)
    d01 = np.sum(ab * ac, 1)
    d11 = np.sum(ac * ac, 1)
    d20 = np.sum(ap * ab, 1)
    d21 = np.sum(ap * ac, 1)
    den = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / den
    w = (d00 * d21 - d01 * d20) / den
    inside = (v >= 0) & (w >= 0) & (v + w <= 1)
    proj = a + v[:, None] * ab + w[:, None] * ac
    dist = np.linalg.norm(p - proj, axis=1)

    def seg(u, q):
        t = np.clip(np.sum((p - u) * (q - u), 1) / np.sum((q - u) ** 2, 1), 0, 1)
        return np.linalg.norm(p - (u + t[:, None] * (q - u)), axis=1)

    edge = np.minimum(np.minimum(seg(a, b), seg(b, c)), seg(c, a))
    return np.where(inside, dist, edge)


def distance_to_mesh(x: np.ndarray, mesh: BoundaryMesh, candidates: int = 12) -> np.ndarray:
    x = np.atleast_2d(x)
    out = np.empty(len(x))
    for i, p in enumerate(x):
        dc = np.linalg.norm(mesh.centroids - p, axis=1)
        near = np.argpartition(dc, min(candidates, len(dc) - 1))[:candidates]
        out[i] = np.min(_point_triangle_distance(p, mesh.triangles[near]))
    return out


# ---------------------------------------------------------------------------
# boundary integrals


def _kernel_factor(mesh: BoundaryMesh, g: np.ndarray, variant: str) -> np.ndarray:
    """``alpha g`` (F) or ``bar(alpha) g`` (Fbar) per triangle, times area."""
    g = np.asarray(g, dtype=complex).reshape(4, -1)
    a = mesh.alpha if variant in ("F", "S") else qconj(mesh.alpha)
    return qmul(a, g) * mesh.areas


def _left_factors(variant: str):
    # bar(y - x) = (y-x)_0 - e1 (y-x)_1 - e2 (y-x)_2 for F; y - x for Fbar
    s = -1.0 if variant in ("F", "S") else 1.0
    return [np.array([1, 0, 0, 0], complex), np.array([0, s, 0, 0], complex), np.array([0, 0, s, 0], complex)]


def _accumulate(points: np.ndarray, src: np.ndarray, ca: np.ndarray, variant: str, exclude=None) -> np.ndarray:
    """``sum_t d(x, y_t)/|d|^3 ... ca_t`` with ``d = y - x`` via three real matmuls."""
    units = _left_factors(variant)
    pre = [qmul(u.reshape(4, 1), ca) for u in units]
    out = np.zeros((4, len(points)), dtype=complex)
    chunk = max(1, 4_000_000 // max(1, len(src)))
    for s in range(0, len(points), chunk):
        p = points[s : s + chunk]
        d = src[None, :, :] - p[:, None, :]
        r3 = np.sum(d**2, axis=2) ** 1.5
        if exclude is not None:
            rows = np.arange(len(p))
            r3[rows, exclude[s : s + chunk]] = np.inf
        for j in range(3):
            w = d[:, :, j] / r3
            out[:, s : s + chunk] += (w @ pre[j].T).T
    return out


@lru_cache(maxsize=8)
def _sub_barycentric(depth: int) -> np.ndarray:
    """Barycentric coordinates of the centroids of a ``4**depth`` split."""
    pts = np.eye(3)[None]
    for _ in range(depth):
        a, b, c = pts[:, 0], pts[:, 1], pts[:, 2]
        ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
        pts = np.concatenate(
            [np.stack([a, ab, ca], 1), np.stack([b, bc, ab], 1), np.stack([c, ca, bc], 1), np.stack([ab, bc, ca], 1)]
        )
    return pts.mean(axis=1)


def self_principal_value(triangles: np.ndarray, order: int = 16) -> np.ndarray:
    """``PV int_tri (y - c)/|y - c|^3 dS`` about each centroid ``c``.

    In polar coordinates around ``c`` the integral reduces to
    ``int u(theta) ln rho(theta) dtheta``; each edge is handled with
    Gauss-Legendre in the angle.  Returns ``(m, 3)`` in-plane vectors.
    """
    x = triangles.mean(axis=1)
    gl, gw = np.polynomial.legendre.leggauss(order)
    out = np.zeros_like(x)
    for i in range(3):
        a = triangles[:, i]
        b = triangles[:, (i + 1) % 3]
        t = b - a
        t /= np.linalg.norm(t, axis=1, keepdims=True)
        foot = a + np.sum((x - a) * t, 1)[:, None] * t
        nv = foot - x
        p = np.linalg.norm(nv, axis=1)
        nh = nv / p[:, None]
        th_a = np.arctan2(np.sum((a - x) * t, 1), np.sum((a - x) * nh, 1))
        th_b = np.arctan2(np.sum((b - x) * t, 1), np.sum((b - x) * nh, 1))
        half = 0.5 * (th_b - th_a)[:, None]
        th = half * gl[None] + 0.5 * (th_b + th_a)[:, None]
        w = half * gw[None]
        lr = np.log(p[:, None] / np.cos(th))
        out += np.sum(w * np.cos(th) * lr, 1)[:, None] * nh + np.sum(w * np.sin(th) * lr, 1)[:, None] * t
    return out


def _near_correction(points, mesh: BoundaryMesh, ca, variant: str, out, skip_self: bool = False, reach: float = 3.0):
    """Replace the centroid rule by split panels for nearby (point, triangle) pairs."""
    units = _left_factors(variant)
    pre = [qmul(u.reshape(4, 1), ca) for u in units]
    tree = cKDTree(mesh.centroids)
    lists = tree.query_ball_point(points, reach * float(mesh.edge_lengths.max()))
    pi = np.concatenate([np.full(len(l), i) for i, l in enumerate(lists)]).astype(int)
    ti = np.concatenate([np.asarray(l, dtype=int) for l in lists]).astype(int)
    if skip_self:
        keep = ti != pi
        pi, ti = pi[keep], ti[keep]
    if len(pi) == 0:
        return out
    d0 = mesh.centroids[ti] - points[pi]
    dist = np.linalg.norm(d0, axis=1)
    near = dist < reach * mesh.edge_lengths[ti]
    pi, ti, d0, dist = pi[near], ti[near], d0[near], dist[near]
    depth = np.clip(np.ceil(np.log2(4 * mesh.edge_lengths[ti] / np.maximum(dist, 1e-12))), 1, 6).astype(int)
    for dep in np.unique(depth):
        sel = depth == dep
        bary = _sub_barycentric(int(dep))
        chunk = max(1, 2_000_000 // len(bary))
        idx_all = np.nonzero(sel)[0]
        for s in range(0, len(idx_all), chunk):
            idx = idx_all[s : s + chunk]
            p, t = pi[idx], ti[idx]
            sub = np.einsum("sk,pkc->psc", bary, mesh.triangles[t])
            d = sub - points[p][:, None, :]
            r3 = np.sum(d**2, axis=2) ** 1.5
            dc = d0[idx]
            rc3 = np.sum(dc**2, axis=1) ** 1.5
            for j in range(3):
                w = np.mean(d[:, :, j] / r3, axis=1) - dc[:, j] / rc3
                np.add.at(out, (slice(None), p), w * pre[j][:, t])
    return out


def cauchy_boundary(g, x, mesh: BoundaryMesh, variant: str = "F", check: bool = True, refine: bool = True) -> np.ndarray:
    """Evaluate ``(F g)(x)`` or ``(Fbar g)(x)`` at points off the surface.

    ``g`` holds one quaternion per triangle (shape ``(4, n_tri)``), ``x`` is a
    point or an array of points ``(m, 3)``.  The centroid rule is used except
    for triangles closer than three edge lengths to ``x``, which are split
    until the pieces are small compared with the distance.  Returns
    ``(4,)`` for a single point, else ``(4, m)``.
    """
    if variant not in ("F", "Fbar"):
        raise ValueError(f"unknown variant {variant!r}")
    single = np.ndim(x) == 1
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if check:
        r = np.linalg.norm(pts - mesh.centroids.mean(axis=0), axis=1)
        rmean = float(np.mean(np.linalg.norm(mesh.centroids - mesh.centroids.mean(axis=0), axis=1)))
        suspect = np.abs(r - rmean) < 3 * mesh.resolution
        if np.any(suspect):
            dist = distance_to_mesh(pts[suspect], mesh)
            if np.any(dist < mesh.resolution):
                raise TooCloseToBoundary(
                    f"point at distance {dist.min():.3g} from the surface; resolution is {mesh.resolution:.3g}"
                )
    ca = _kernel_factor(mesh, g, variant)
    out = _accumulate(pts, mesh.centroids, ca, variant)
    if refine:
        _near_correction(pts, mesh, ca, variant, out)
    out /= OMEGA
    return out[:, 0] if single else out


def singular_boundary(g, mesh: BoundaryMesh, variant: str = "S", refine: bool = True) -> np.ndarray:
    """``S g`` at every centroid, factor ``1/(2 pi)``.

    The self-triangle is excluded from the centroid sum and replaced by its
    exact in-plane principal value (constant density on the panel); nearby
    panels are split as in :func:`cauchy_boundary`.  ``refine=False`` gives
    the bare centroid rule with the self-triangle simply omitted.
    """
    if variant not in ("S", "Sbar"):
        raise ValueError(f"unknown variant {variant!r}")
    g = np.asarray(g, dtype=complex).reshape(4, -1)
    ca = _kernel_factor(mesh, g, variant)
    idx = np.arange(len(mesh.centroids))
    out = _accumulate(mesh.centroids, mesh.centroids, ca, variant, exclude=idx)
    if refine:
        _near_correction(mesh.centroids, mesh, ca, variant, out, skip_self=True)
        pv = self_principal_value(mesh.triangles)
        a = mesh.alpha if variant == "S" else qconj(mesh.alpha)
        ga = qmul(a, g)
        for j, u in enumerate(_left_factors(variant)):
            out += pv[:, j] * qmul(u.reshape(4, 1), ga)
    return out / (2.0 * np.pi)


def projector(g, mesh: BoundaryMesh) -> np.ndarray:
    """``P g = (g + S g) / 2``."""
    g = np.asarray(g, dtype=complex).reshape(4, -1)
    return 0.5 * (g + singular_boundary(g, mesh))


def random_surface_density(mesh: BoundaryMesh, rng: np.random.Generator, degree: int = 2) -> np.ndarray:
    """Random quaternion polynomial of total ``degree`` in the centroid coordinates, ``(4, m)``.

    Smooth test data for the boundary operators; white noise on the panels
    is not resolved by the centroid rule.
    """
    c = mesh.centroids
    monomials = [np.ones(len(c))]
    for d in range(1, degree + 1):
        for combo in combinations_with_replacement(range(3), d):
            monomials.append(np.prod(c[:, list(combo)], axis=1))
    basis = np.stack(monomials)
    coef = rng.standard_normal((4, len(basis))) + 1j * rng.standard_normal((4, len(basis)))
    return coef @ basis


def trace(f: QField, points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of a field to points ``(m, 3)``; returns ``(4, m)``."""
    g = f.grid
    idx = ((np.asarray(points, dtype=float) - np.asarray(g.origin)) / g.h).T
    out = np.empty((4, idx.shape[1]), dtype=complex)
    for c in range(4):
        re = map_coordinates(f.values[c].real, idx, order=1, mode="nearest")
        im = map_coordinates(f.values[c].imag, idx, order=1, mode="nearest")
        out[c] = re + 1j * im
    return out


def interior_points(grid: Grid3, mesh: BoundaryMesh, fraction: float = 0.75) -> tuple[np.ndarray, np.ndarray]:
    """Grid nodes within ``fraction`` of the sphere radius; (mask, points)."""
    c = mesh.centroids.mean(axis=0)
    radius = float(np.mean(np.linalg.norm(mesh.vertices - c, axis=1)))
    mask = grid.radius(c) <= fraction * radius
    pts = grid.coords()[:, mask].T
    return mask, pts


def borel_pompeiu_residual(f: QField, mesh: BoundaryMesh, method: str = "lattice", fraction: float = 0.75) -> float:
    """Relative L2 residual of ``F(tr f) + T(Df 1_Omega) - f`` at interior nodes."""
    grid = f.grid
    c = mesh.centroids.mean(axis=0)
    radius = float(np.mean(np.linalg.norm(mesh.vertices - c, axis=1)))
    df = apply_D(f, "D")
    chi = ball_fraction(grid, radius, c)
    tdf = teodorescu(QField(grid, df.values * chi), "T", method)
    mask, pts = interior_points(grid, mesh, fraction)
    fb = cauchy_boundary(trace(f, mesh.centroids), pts, mesh, "F", check=False)
    res = fb + tdf.values[:, mask] - f.values[:, mask]
    return float(np.sqrt(np.sum(np.abs(res) ** 2) / np.sum(np.abs(f.values[:, mask]) ** 2)))


def plemelj_limit(g, mesh: BoundaryMesh, tri: int, step: float | None = None, variant: str = "F") -> np.ndarray:
    """Richardson-extrapolated inner limit of ``F g`` at the centroid of ``tri``.

    Samples along the inward normal at distances ``4s, 2s, s`` (``s`` defaults
    to the mesh resolution) and extrapolates the quadratic through them to 0.
    """
    s = mesh.resolution if step is None else step
    c = mesh.centroids[tri]
    n = mesh.normals[tri]
    ds = np.array([4 * s, 2 * s, s])
    vals = cauchy_boundary(g, c[None, :] - ds[:, None] * n[None, :], mesh, variant, check=False).T
    # Lagrange weights at 0 for the nodes 4s, 2s, s
    return vals[0] / 3.0 - 2.0 * vals[1] + (8.0 / 3.0) * vals[2]


def save_mesh(mesh: BoundaryMesh, path) -> Path:
    mesh.save(path)
    return Path(path)
