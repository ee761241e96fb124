import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quatcalderon.errors import PositivityViolation
from quatcalderon.grid import (
    Bump,
    Grid3,
    Phantom,
    QField,
    SNorm,
    ball_fraction,
    default_phantom,
    dft3,
    dump_field,
    idft3,
    load_field,
    mollifier,
    mollifier_gradient,
    padding_shell,
    radial_window,
    sample_phantom,
    snorm,
    spectral_gradient,
    spectral_laplacian,
)


def test_default_grid_geometry():
    g = Grid3.cube()
    assert g.n == 32 and g.shape == (32, 32, 32)
    assert np.isclose(g.side, 3.0)
    x = g.coords()
    assert np.isclose(x.min(), -1.5) and np.isclose(x.max(), 1.5 - g.h)


def test_empty_phantom_is_unit():
    g = Grid3.cube(16)
    gam = sample_phantom(Phantom(), g)
    np.testing.assert_array_equal(gam.values[0], 1.0)
    np.testing.assert_array_equal(gam.values[1:], 0.0)


def test_bump_minimum_at_centre():
    # centre on a grid node so the profile maximum 1 is sampled exactly
    g = Grid3.cube(32)
    ph = Phantom((Bump((0.0, 0.0, 0.0), 0.4, 0.3 + 0.1j),))
    gam = sample_phantom(ph, g)
    assert np.isclose(np.min(gam.sc.real), 0.7, atol=1e-12)


def test_positivity_violation():
    ph = Phantom((Bump((0.0, 0.0, 0.0), 0.5, 1.2),))
    with pytest.raises(PositivityViolation):
        sample_phantom(ph, Grid3.cube(16))


def test_bump_in_padding_shell_rejected():
    ph = Phantom((Bump((1.2, 0.0, 0.0), 0.3, 0.1),))
    with pytest.raises(ValueError):
        sample_phantom(ph, Grid3.cube(32))


def test_phantom_dict_round_trip():
    ph = Phantom((Bump((0.1, 0.2, -0.1), 0.5, 0.2 - 0.3j, "cone"), Bump((0, 0, 0), 0.3, 0.1)), 0.2, "two")
    assert Phantom.from_dict(ph.to_dict()) == ph


def test_mollifier_support_and_peak():
    r = np.array([0.0, 0.5, 0.999, 1.0, 2.0])
    m = mollifier(r, 1.0)
    assert m[0] == 1.0 and m[3] == 0.0 and m[4] == 0.0
    assert 0 < m[2] < 1e-100 or m[2] == 0.0


def test_mollifier_gradient_matches_finite_difference(rng):
    c = np.array([0.1, -0.2, 0.05])
    for _ in range(20):
        x = c + rng.uniform(-0.5, 0.5, 3)
        grad = mollifier_gradient(x.reshape(3, 1), c, 0.7)[:, 0]
        fd = np.zeros(3)
        for j in range(3):
            e = np.zeros(3)
            e[j] = 1e-6
            fd[j] = (mollifier(np.linalg.norm(x + e - c), 0.7) - mollifier(np.linalg.norm(x - e - c), 0.7)) / 2e-6
        assert np.allclose(grad, fd, atol=1e-7)


def test_cone_gradient_lipschitz_witness():
    g = Grid3.cube(32)
    ph = Phantom((Bump((0.0, 0.0, 0.0), 0.5, 0.4, "cone"),))
    gam = sample_phantom(ph, g).sc.real
    fd = max(np.max(np.abs(np.diff(gam, axis=a))) / g.h for a in range(3))
    assert fd <= 0.4 / 0.5 * (1 + 5 * g.h / 0.5)


def test_dft3_zero_and_zero_frequency():
    g = Grid3.cube(16)
    assert np.all(dft3(QField.zeros(g), np.ones((3, 2))) == 0)
    f = QField.scalar(g, mollifier(g.radius(), 0.8))
    val = dft3(f, np.zeros((3, 1)))[0, 0]
    assert np.isclose(val, g.cell_volume * np.sum(f.sc))


def test_dft3_fft_matches_direct_summation(rng):
    g = Grid3.cube(8)
    f = QField(g, rng.standard_normal((4,) + g.shape) + 1j * rng.standard_normal((4,) + g.shape))
    lattice, spec = dft3(f)
    x = g.coords().reshape(3, -1)
    xi = lattice.reshape(3, -1)
    direct = f.values.reshape(4, -1) @ np.exp(-1j * (x.T @ xi)) * g.cell_volume
    assert np.max(np.abs(direct - spec.reshape(4, -1))) < 1e-10 * np.max(np.abs(direct))
    back = idft3(spec, g)
    assert np.max(np.abs(back.values - f.values)) < 1e-10 * np.max(np.abs(f.values))


def test_parseval():
    g = Grid3.cube(24)
    f = QField.scalar(g, mollifier(g.radius((0.1, 0, 0)), 0.7) * (1 + 0.5j))
    lattice, spec = dft3(f)
    dxi = 2 * np.pi / g.side
    lhs = g.cell_volume * np.sum(np.abs(f.values) ** 2)
    rhs = (2 * np.pi) ** -3 * dxi**3 * np.sum(np.abs(spec) ** 2)
    assert abs(lhs - rhs) < 1e-8 * lhs


def test_spectral_gradient_exact_on_trig_polynomial():
    g = Grid3.cube(16)
    x = g.coords()
    w = 2 * np.pi / g.side
    f = np.sin(2 * w * x[0]) * np.cos(w * x[2])
    grad = spectral_gradient(f, g)
    assert np.allclose(grad[0], 2 * w * np.cos(2 * w * x[0]) * np.cos(w * x[2]), atol=1e-12)
    assert np.allclose(grad[1], 0, atol=1e-12)
    assert np.allclose(grad[2], -w * np.sin(2 * w * x[0]) * np.sin(w * x[2]), atol=1e-12)
    lap = spectral_laplacian(f, g)
    assert np.allclose(lap, -5 * w**2 * f, atol=1e-10)


def test_windows_and_ball_fraction():
    g = Grid3.cube(32)
    w = radial_window(g)
    r = g.radius()
    assert np.all(w[r <= 1.15] == 1.0) and np.all(w[r >= 1.4] == 0.0)
    vol = np.sum(ball_fraction(g)) * g.cell_volume
    assert abs(vol - 4 * np.pi / 3) < 5e-3
    shell = padding_shell(g)
    assert shell[0, 5, 5] and not shell[16, 16, 16]


def test_field_dump_round_trip(tmp_path, rng):
    g = Grid3.cube(8)
    f = QField(g, rng.standard_normal((4,) + g.shape) + 1j * rng.standard_normal((4,) + g.shape))
    dump_field(f, tmp_path / "f.qf", {"field": "test"})
    back, header = load_field(tmp_path / "f.qf")
    np.testing.assert_array_equal(back.values, f.values)
    assert back.grid == g and header["field"] == "test"


def test_snorm_examples():
    ks = np.array([[0, 0, 1.0], [0, 0, 3.0], [0, 0, 5.0]])
    zeros = np.zeros((3, 4, 2))
    assert snorm(zeros, SNorm(ks=ks)) == 0.0
    one = np.ones((1, 5))
    assert np.isclose(snorm(one, SNorm(ks=[[0, 0, 1.0]])), 1.0)
    with pytest.raises(ValueError):
        SNorm(p=2.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 6.0))
def test_snorm_monotone_in_cutoff(R):
    rng = np.random.default_rng(0)
    ks = np.vstack([rng.uniform(-8, 8, (40, 3)), [[0.0, 0.0, 13.0]]])
    vals = rng.standard_normal((41, 6))
    assert snorm(vals, SNorm(R=2 * R, ks=ks)) <= snorm(vals, SNorm(R=R, ks=ks))


def test_default_phantom_contrast():
    ph = default_phantom()
    assert len(ph.bumps) == 1 and ph.bumps[0].amplitude == 0.3 + 0.1j
