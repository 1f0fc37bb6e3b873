import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from dckerr.geometry import Grid3D, Ray, planar_direction
from dckerr.media import (GaussianBumps, GriddedField, RetardationProfile, eval_chi, line_integrals, retardation,
                          xray_transform)


def centered(s=0.3, a=1.0):
    return GaussianBumps([[a, 0, 0, 0, s]], support_radius=1.8, domain_radius=2.0)


def test_zero_outside_support():
    f = centered()
    pts = np.array([[1.8, 0, 0], [0, 1.9, 0], [0, 0, -2.5]])
    assert np.all(eval_chi(f, pts) == 0.0)
    with pytest.raises(ValueError):
        GaussianBumps([[1, 0, 0, 0, 0.3]], support_radius=2.0, domain_radius=2.0)


@given(st.floats(-1.0, 1.0), st.floats(0, np.pi))
@settings(max_examples=30, deadline=None)
def test_xray_of_centered_gaussian_is_analytic(p, angle):
    # the line integral of a 3D Gaussian is sqrt(2 pi) s exp(-p^2 / 2 s^2); the cutoff tail is below 1e-9
    s = 0.25
    w = planar_direction(angle)
    perp = np.array([-w[1], w[0], 0.0])
    val = xray_transform(centered(s), w, p * perp)
    assert val == pytest.approx(np.sqrt(2 * np.pi) * s * np.exp(-p * p / (2 * s * s)), abs=1e-9)


def test_batch_line_integrals_match_adaptive_quadrature():
    f = GaussianBumps([[1.0, 0.4, 0.2, 0.0, 0.35], [0.7, -0.5, -0.3, 0.1, 0.3]], 1.8, 2.0)
    rng = np.random.default_rng(1)
    ys = rng.uniform(-1.5, 1.5, (20, 3))
    ys[:, 2] *= 0.3
    w = planar_direction(0.7)
    batch = line_integrals(f, ys, w)
    ref = [xray_transform(f, w, y) for y in ys]
    assert np.allclose(batch, ref, atol=1e-9)


def test_retardation_profile_is_cumulative():
    f = centered(0.4, 2.0)
    ray = Ray([0.0, 0.1, 0.0], [1.0, 0.0, 0.0])
    prof = retardation(f, 1.5, ray)
    s = np.linspace(-3, 3, 41)
    tau = prof(s)
    assert tau[0] == 0.0
    assert np.all(np.diff(tau) >= -1e-14)
    assert tau[-1] == pytest.approx(prof.tau_infinity)
    mid, _ = quad(lambda r: float(f(ray.point(r))), -3, 0.25, epsabs=1e-13, limit=200)
    assert prof(0.25) == pytest.approx(0.5 * 1.5**2 * mid, abs=1e-10)
    # truncated batch integrals agree with the profile
    up = line_integrals(f, ray.y[None], ray.omega, upper=np.array([0.25]))[0]
    assert prof(0.25) == pytest.approx(0.5 * 1.5**2 * up, abs=1e-10)


def test_zero_field_and_zero_bias():
    ray = Ray([0.0, 0.0, 0.0], [1.0, 0.0, 0.0])
    assert RetardationProfile(centered(), 0.0, ray).tau_infinity == 0.0
    empty = GaussianBumps(np.zeros((0, 5)), 1.8, 2.0)
    assert RetardationProfile(empty, 2.0, ray).tau_infinity == 0.0


def test_gridded_field_trilinear():
    g = Grid3D.cube(1.0, 11)
    m = g.mesh()
    lin = 1.0 + m[..., 0] + 2 * m[..., 1] - m[..., 2]
    f = GriddedField(g, lin, support_radius=0.9, domain_radius=1.0)
    pts = np.array([[0.13, -0.21, 0.05], [0.0, 0.0, 0.95]])
    expect = np.array([1.0 + 0.13 - 0.42 - 0.05, 0.0])
    assert np.allclose(f(pts), expect, atol=1e-12)


def test_rotated_bumps_rotate_line_integrals():
    f = GaussianBumps([[1.0, 0.4, 0.2, 0.0, 0.35]], 1.8, 2.0)
    a = 0.4
    g = f.rotated_z(a)
    y = np.array([0.0, 0.3, 0.0])
    w = planar_direction(0.2)
    c, s = np.cos(a), np.sin(a)
    R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    assert xray_transform(g, R @ w, R @ y) == pytest.approx(xray_transform(f, w, y), abs=1e-11)
