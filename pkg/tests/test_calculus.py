import numpy as np
import pytest

from quatcalderon.calculus import (
    CauchyKernel,
    apply_D,
    borel_pompeiu_residual,
    cauchy_boundary,
    icosphere,
    laplacian,
    plemelj_limit,
    projector,
    random_surface_density,
    right_inverse_residual,
    singular_boundary,
    teodorescu,
    trace,
)
from quatcalderon.cgo import exp_growing, make_zeta
from quatcalderon.errors import TooCloseToBoundary
from quatcalderon.grid import Grid3, QField, mollifier, radial_window, spectral_laplacian
from quatcalderon.quat import qmul


def _smooth_field(g):
    x = g.coords()
    b = mollifier(g.radius((0.05, 0.0, 0.0)), 0.8)
    return QField(g, np.stack([b, 0.5 * b * x[1], 0.3j * b, 0.2 * b * x[0]]).astype(complex))


def test_D_of_constant_is_zero():
    g = Grid3.cube(16)
    f = QField(g, np.ones((4,) + g.shape, complex) * (1 + 2j))
    assert apply_D(f).linf() < 1e-12


def test_D_of_windowed_coordinate():
    # wide cut-off so the transition is resolved; D x0 = 1 on the plateau
    errs = []
    for n in (32, 48):
        g = Grid3.cube(n)
        f = QField.scalar(g, g.coords()[0] * radial_window(g, 0.5, 1.4))
        d = apply_D(f)
        inner = g.radius() <= 0.4
        errs.append(max(np.max(np.abs(d.values[0][inner] - 1)), np.max(np.abs(d.values[1:, inner]))))
    assert errs[1] < errs[0] < 0.01


def test_D_Dbar_is_laplacian(rng):
    # trigonometric polynomial without Nyquist content, where both operators are exact
    g = Grid3.cube(16)
    x = g.coords()
    w = 2 * np.pi / g.side
    f = np.zeros((4,) + g.shape, complex)
    for _ in range(10):
        c = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        f += c.reshape(4, 1, 1, 1) * np.exp(1j * w * np.tensordot(rng.integers(-7, 8, 3), x, 1))
    lap = laplacian(QField(g, f)).values
    ref = spectral_laplacian(f, g)
    assert np.linalg.norm(lap - ref) < 1e-8 * np.linalg.norm(ref)


def test_kernel_is_odd():
    k = CauchyKernel.build(8, 0.1, "T")
    for off in [(1, 0, 0), (2, -3, 1), (-4, 5, 7), (0, 0, 0)]:
        neg = tuple(-o for o in off)
        np.testing.assert_array_equal(k.at(off), -k.at(neg))


@pytest.mark.parametrize("method", ["lattice", "spectral"])
def test_teodorescu_right_module(method, rng):
    g = Grid3.cube(16)
    f = _smooth_field(g)
    c = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    lhs = teodorescu(QField(g, qmul(f.values, c.reshape(4, 1, 1, 1))), "T", method).values
    rhs = qmul(teodorescu(f, "T", method).values, c.reshape(4, 1, 1, 1))
    assert np.max(np.abs(lhs - rhs)) < 1e-12 * np.max(np.abs(rhs))


def test_teodorescu_of_centred_ball_vanishes_at_centre():
    g = Grid3.cube(32)
    ball = QField.scalar(g, (g.radius() <= 0.8).astype(float))
    t = teodorescu(ball, "T", "lattice")
    assert np.max(np.abs(t.values[:, 16, 16, 16])) < 1e-12 * np.max(np.abs(t.values))


@pytest.mark.parametrize("variant", ["T", "Tbar"])
@pytest.mark.parametrize("method", ["lattice", "spectral"])
def test_right_inverse_converges(variant, method):
    res = [right_inverse_residual(_smooth_field(Grid3.cube(n)), variant, method) for n in (16, 24, 32)]
    assert res[-1] < 5e-2
    assert res[0] > res[1] > res[2]


def test_icosphere_geometry():
    m = icosphere(3)
    assert len(m.areas) == 20 * 4**3
    assert abs(m.total_area - 4 * np.pi) < 0.02 * 4 * np.pi
    assert np.all(np.sum(m.normals * m.centroids, axis=1) > 0)


def test_cauchy_of_zero_and_too_close():
    m = icosphere(3)
    assert np.all(cauchy_boundary(np.zeros((4, len(m.areas))), [0.1, 0.2, 0.0], m) == 0)
    with pytest.raises(TooCloseToBoundary):
        cauchy_boundary(np.ones((4, len(m.areas))), m.centroids[0] * 0.999, m)


def test_cauchy_reproduces_monogenic_function(rng):
    m = icosphere(4)
    zp = make_zeta(np.array([0.3, 0.5, 1.0]))
    g = exp_growing(m.centroids.T, zp)
    pts = rng.uniform(-0.5, 0.5, (30, 3))
    F = cauchy_boundary(g, pts, m)
    E = exp_growing(pts.T, zp)
    assert np.linalg.norm(F - E) / np.linalg.norm(E) < 0.02


def test_cauchy_integral_is_monogenic():
    m = icosphere(3)
    zp = make_zeta(np.array([0.3, 0.5, 1.0]))
    g = exp_growing(m.centroids.T, zp) + 0.3
    x = np.array([0.2, -0.1, 0.3])
    s = 1e-4
    total = np.zeros(4, complex)
    for j in range(3):
        e = np.zeros(3)
        e[j] = s
        deriv = (cauchy_boundary(g, x + e, m) - cauchy_boundary(g, x - e, m)) / (2 * s)
        total += qmul(np.eye(4)[j].astype(complex), deriv)
    assert np.linalg.norm(total) < 1e-3 * np.linalg.norm(cauchy_boundary(g, x, m))


def test_projector_fixes_monogenic_traces():
    m = icosphere(4)
    g = exp_growing(m.centroids.T, make_zeta(np.array([0.3, 0.5, 1.0])))
    assert np.linalg.norm(projector(g, m) - g) / np.linalg.norm(g) < 0.01


def test_projector_idempotent_on_smooth_data(rng):
    m = icosphere(3)
    g = random_surface_density(m, rng)
    p = projector(g, m)
    assert np.linalg.norm(projector(p, m) - p) / np.linalg.norm(g) < 0.05


def test_single_layer_of_one_refines_towards_plus_one():
    # measured limit is +1, consistent with the Plemelj jump and P^2 = P
    errs = []
    for level in (2, 3, 4):
        m = icosphere(level)
        ones = np.zeros((4, len(m.areas)), complex)
        ones[0] = 1
        s = singular_boundary(ones, m)
        errs.append(np.max(np.abs(s[0] - 1)))
        assert np.max(np.abs(s[1:])) < 0.01
    assert errs[0] > errs[1] > errs[2]
    assert errs[-1] < 0.005


def test_plemelj_limit_matches_projector(rng):
    m = icosphere(4)
    g = random_surface_density(m, rng)
    sg = singular_boundary(g, m)
    for t in rng.choice(len(m.areas), 8, replace=False):
        want = 0.5 * (g[:, t] + sg[:, t])
        assert np.linalg.norm(plemelj_limit(g, m, t) - want) < 0.1 * np.linalg.norm(want)


def test_borel_pompeiu_cases():
    g = Grid3.cube(24)
    m = icosphere(3)
    w = radial_window(g)
    x = g.coords()
    one = QField.scalar(g, w)
    coord = QField.scalar(g, x[0] * w)
    mono = QField(g, exp_growing(x, make_zeta(np.array([0.2, 0.1, 0.4]))) * w)
    assert borel_pompeiu_residual(one, m) < 0.02
    assert borel_pompeiu_residual(mono, m) < 0.02
    assert borel_pompeiu_residual(coord, m) < 0.05
    assert borel_pompeiu_residual(coord, m, "spectral") < 0.05


def test_trace_is_exact_on_linear_fields(rng):
    g = Grid3.cube(16)
    x = g.coords()
    f = QField.scalar(g, 2 * x[0] - x[1] + 0.5 * x[2])
    pts = rng.uniform(-0.9, 0.9, (10, 3))
    t = trace(f, pts)
    assert np.allclose(t[0], 2 * pts[:, 0] - pts[:, 1] + 0.5 * pts[:, 2])
