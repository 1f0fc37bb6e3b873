import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from dckerr import profiles as pf
from dckerr.geometry import Grid3D, Ray, canonical_frame, planar_direction
from dckerr.media import GaussianBumps, RetardationProfile

CHI = GaussianBumps([[1.0, 0.0, 0.1, 0.0, 0.3]], support_radius=0.9, domain_radius=2.0)


def beam(**kw):
    args = dict(r0=0.5, a2=1.0, a3=0.5, h=0.1, launch=-1.5, length=0.4, taper=0.3)
    args.update(kw)
    return pf.make_beam(**args)


def test_core_amplitude_and_zero_potential():
    b = beam()
    pts = np.array([[-1.5, 0.1, -0.2], [-1.4, 0.3, 0.3]])
    u = b.U_init(pts)
    g = b.longitudinal(pts[:, 0])
    assert np.allclose(u, g[:, None] * np.array([0.0, 1.0, 0.5]), atol=1e-14)
    zero = pf.make_beam(rho=lambda x2, x3: 0.0 * x2, h=0.1)
    assert np.all(zero.U_init(np.random.default_rng(0).uniform(-1, 1, (5, 3))) == 0.0)


@given(st.floats(-1.9, -1.1), st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
@settings(max_examples=40, deadline=None)
def test_initial_beam_is_divergence_free_and_transverse(x1, x2, x3):
    b = beam()
    # the taper is steep, so the fourth-order stencil needs a small step
    d = 2e-4
    x = np.array([x1, x2, x3])
    div = 0.0
    for a in range(3):
        e = np.zeros(3)
        e[a] = d
        u = lambda k: b.U_init(x + k * e)[a]
        div += (8 * (u(1) - u(-1)) - (u(2) - u(-2))) / (12 * d)
    scale = max(1.0, float(np.max(np.abs(b.U_init(x)))))
    assert abs(div) < 1e-6 * scale
    assert b.U_init(x)[0] == 0.0


def test_split_initial():
    b = beam()
    a_in, a_out = pf.split_initial(b)
    x = np.array([[-1.5, 0.1, 0.0], [-1.3, -0.2, 0.1]])
    assert np.allclose(a_in(0.0, x), 0.5 * b.U_init(x))
    assert np.allclose(a_in(0.0, x) + a_out(0.0, x), b.U_init(x))
    # the two halves have opposite time derivatives, so the initial field is at rest
    dt = 1e-6
    d_in = (a_in(dt, x) - a_in(-dt, x)) / (2 * dt)
    d_out = (a_out(dt, x) - a_out(-dt, x)) / (2 * dt)
    assert np.allclose(d_in + d_out, 0.0, atol=1e-6)


def test_leading_field_linear_regime_is_dalembert():
    b = beam()
    t = 0.7
    x = np.random.default_rng(1).uniform(-2.5, 0.5, (50, 3))
    got = pf.evaluate_leading_field(b, CHI, 0.0, t, x, include_outgoing=True)
    h = b.h
    expect = h**1.5 * (b.U_init(x - t * pf.E1) * np.cos((x[:, 0] - t) / h)[:, None]
                       + b.U_init(x + t * pf.E1) * np.cos((x[:, 0] + t) / h)[:, None])
    assert np.max(np.abs(got - expect)) < 1e-15


def test_leading_field_trivial_beam_is_bias():
    zero = pf.make_beam(rho=lambda x2, x3: 0.0 * x2, h=0.05)
    x = np.zeros((3, 3))
    out = pf.evaluate_leading_field(zero, CHI, 2.0, 0.3, x)
    assert np.allclose(out, [[0, 0, np.sqrt(0.05) * 2.0]] * 3)


def test_leading_field_phases_behind_medium():
    b = beam(launch=-1.5)
    e0 = 1.3
    t = 2.6
    x = np.array([[1.1, 0.1, 0.0]])
    E = pf.evaluate_leading_field(b, CHI, e0, t, x)[0]
    tau = RetardationProfile(CHI, e0, Ray(x[0] - t * pf.E1, pf.E1)).tau_infinity
    u = b.U_init(x - t * pf.E1)[0]
    th = (x[0, 0] - t) / b.h
    assert E[1] == pytest.approx(b.h**1.5 * u[1] * np.cos(th + tau), abs=1e-12)
    assert E[2] == pytest.approx(np.sqrt(b.h) * e0 + b.h**1.5 * u[2] * np.cos(th + 3 * tau), abs=1e-12)


def test_propagate_matches_ode_oracle():
    e0 = 1.4
    ray = Ray([0.0, 0.1, 0.05], planar_direction(0.3))
    prof = pf.propagate_U0(beam(), CHI, e0, ray, initial=[0, 0.3 + 0.2j, -0.7j])
    rhs_chi = lambda s: 0.5 * e0**2 * float(CHI(ray.point(s)))

    def f(s, y):
        a = y[:3] + 1j * y[3:]
        da = -1j * pf.PHASE_MULTIPLIERS * rhs_chi(s) * a
        return np.concatenate([da.real, da.imag])

    a0 = prof.initial
    sol = solve_ivp(f, (-1.5, 1.5), np.concatenate([a0.real, a0.imag]), rtol=1e-11, atol=1e-13,
                    dense_output=True, max_step=0.01)
    ss = np.array([-0.5, 0.0, 0.4, 1.2])
    ref = sol.sol(ss).T
    ref = ref[:, :3] + 1j * ref[:, 3:]
    assert np.allclose(prof.amplitude(ss), ref, atol=1e-8)


def test_propagate_examples_from_fixed_retardation():
    class Fixed(RetardationProfile):
        def __init__(self, tau):
            self.tau = tau

        def tau_of_s(self, s):
            return np.full(np.shape(s), self.tau)

        __call__ = tau_of_s

    p = pf.RayProfileU0(Ray([0, 0, 0], [1, 0, 0]), np.array([0, 1, 0], complex), Fixed(0.3))
    assert np.allclose(p.amplitude(1.0), [0, np.exp(-0.3j), 0])
    p = pf.RayProfileU0(Ray([0, 0, 0], [1, 0, 0]), np.array([0, 0, 1], complex), Fixed(0.3))
    assert np.allclose(p.amplitude(1.0), [0, 0, np.exp(-0.9j)])
    free = pf.propagate_U0(beam(), GaussianBumps(np.zeros((0, 5)), 0.9, 2.0), 1.0, Ray([0, 0, 0], [1, 0, 0]),
                           initial=[0, 1, 2])
    assert np.all(free.amplitude(np.linspace(-3, 3, 7)) == np.array([0, 1, 2]))


@given(st.floats(0.01, 3.1))
def test_polarization_ellipse_axes(tau):
    major, minor, _ = pf.polarization_ellipse(1.0, np.exp(-2j * tau))
    expect = sorted([np.sqrt(2) * abs(np.cos(tau)), np.sqrt(2) * abs(np.sin(tau))], reverse=True)
    assert major == pytest.approx(expect[0], abs=1e-12)
    assert minor == pytest.approx(expect[1], abs=1e-12)


@given(st.complex_numbers(max_magnitude=3), st.complex_numbers(max_magnitude=3))
@settings(max_examples=40)
def test_polarization_ellipse_bounds_sampled_curve(a2, a3):
    if abs(a2) + abs(a3) < 1e-3:
        return
    major, minor, ang = pf.polarization_ellipse(a2, a3)
    th = np.linspace(0, 2 * np.pi, 2001)
    pts = np.stack([np.real(a2 * np.exp(1j * th)), np.real(a3 * np.exp(1j * th))])
    r = np.linalg.norm(pts, axis=0)
    assert r.max() == pytest.approx(major, rel=1e-5, abs=1e-9)
    assert r.min() == pytest.approx(minor, rel=1e-4, abs=1e-2 * major)
    # the orientation is a direction of largest extent (any direction for a circle)
    d = np.array([np.cos(ang), np.sin(ang)])
    assert np.max(np.abs(d @ pts)) == pytest.approx(major, rel=1e-5)


def test_polarization_special_cases():
    major, minor, _ = pf.polarization_ellipse(1.0, 1.0)
    assert (major, minor) == pytest.approx((np.sqrt(2), 0.0), abs=1e-14)
    major, minor, _ = pf.polarization_ellipse(1.0, np.exp(-0.5j * np.pi))
    assert major == pytest.approx(1.0) and minor == pytest.approx(1.0)
    with pytest.raises(ValueError):
        pf.polarization_ellipse(0, 0)


def test_nonzero_modes_constant_and_zero_sources():
    s = np.linspace(0, 2, 201)
    v = np.array([1.0, 2.0 - 1j, 0.5j])
    out = pf.solve_nonzero_modes(0, {1: np.tile(v, (s.size, 1)), -2: np.zeros((s.size, 3))}, s, np.zeros_like(s))
    by_mode = {m.mode: m for m in out}
    assert np.allclose(by_mode[1].values, (1j / 2) * s[:, None] * v, atol=1e-13)
    assert np.all(by_mode[-2].values == 0)
    assert {m.mode for m in out} <= set(range(-2, 3)) - {0}


def test_nonzero_modes_index_errors():
    s = np.linspace(0, 1, 11)
    with pytest.raises(ValueError, match="zero harmonic"):
        pf.solve_nonzero_modes(1, {0: np.zeros((11, 3))}, s, s)
    with pytest.raises(ValueError):
        pf.solve_nonzero_modes(1, {4: np.zeros((11, 3))}, s, s)


@pytest.mark.parametrize("ell", [1, -2, 3])
def test_nonzero_modes_match_ode_oracle(ell):
    e0 = 1.2
    chi = lambda s: np.exp(-((s - 1.0) ** 2) / 0.1)
    s = np.linspace(0, 2, 801)
    sol_tau = solve_ivp(lambda x, y: [0.5 * e0**2 * chi(x)], (0, 2), [0.0], t_eval=s, rtol=1e-12, atol=1e-14)
    tau = sol_tau.y[0]
    src = lambda x: np.array([np.sin(3 * x), 1.0 + 0j * x, np.exp(1j * x)]).T
    mode = pf.solve_nonzero_modes(3, {ell: src(s)}, s, tau)[0]

    def rhs(x, y):
        u = y[:3] + 1j * y[3:]
        du = 1j * ell * pf.PHASE_MULTIPLIERS * 0.5 * e0**2 * chi(x) * u + (1j / (2 * ell)) * src(np.array([x]))[0]
        return np.concatenate([du.real, du.imag])

    ref = solve_ivp(rhs, (0, 2), np.zeros(6), t_eval=s, rtol=1e-11, atol=1e-13, method="DOP853")
    ref = (ref.y[:3] + 1j * ref.y[3:]).T
    assert np.max(np.abs(mode.values - ref)) < 1e-7


def _direct_theta_average(A, At, Att, e0, chi, n=64):
    th = 2 * np.pi * np.arange(n) / n
    bias = np.array([0, 0, e0])
    acc = np.zeros(3)
    for t in th:
        ph = np.exp(1j * t)
        U = np.real(np.conj(A) * ph)
        Ut = np.real(np.conj(At) * ph)
        Utt = np.real(np.conj(Att) * ph)
        acc += (2 * (Ut @ Ut) * bias + 2 * (U @ Utt) * bias + 2 * (bias @ Utt) * U + 4 * (bias @ Ut) * Ut
                + 2 * (bias @ U) * Utt)
    return -chi * acc / n


@given(st.lists(st.complex_numbers(max_magnitude=2), min_size=9, max_size=9), st.floats(-2, 2), st.floats(0, 2))
@settings(max_examples=40)
def test_c2_source_matches_trapezoid_average(vals, e0, chi):
    A, At, Att = (np.array(vals[i:i + 3]) for i in (0, 3, 6))
    got = pf.c2_source(A, At, Att, e0, chi)
    assert np.allclose(got, _direct_theta_average(A, At, Att, e0, chi), atol=1e-11)


def test_c2_source_vanishes_without_bias_or_medium():
    A = np.array([0, 1 + 1j, 0.3])
    assert np.all(pf.c2_source(A, 2 * A, 3 * A, 0.0, 1.0) == 0)
    assert np.all(pf.c2_source(A, 2 * A, 3 * A, 1.0, 0.0) == 0)


def test_zero_harmonic_low_orders_and_cfl():
    grid = Grid3D.cube(1.0, 12)
    for k in (0, 1):
        src = pf.zero_harmonic_source(k, beam(), CHI, 1.0, grid)
        z = pf.solve_zero_harmonic(src, grid, 0.05, 10, order=k)
        assert z.is_zero()
    with pytest.raises(ValueError, match="CFL"):
        pf.solve_zero_harmonic(src, grid, grid.spacing[0], 3)


def test_zero_harmonic_plane_source_matches_duhamel():
    # a source along e2 that depends on x1 only is divergence free, so each component solves
    # u_tt - u_xx = f; compare with u(x,t) = 1/2 int_0^t int_{x-(t-s)}^{x+(t-s)} f
    n = 96
    L = 4.0
    grid = Grid3D((-L, -0.5, -0.5), (2 * L / n, 0.5, 0.5), (n, 2, 2))
    x = grid.axes()[0]
    f = lambda xx, t: np.exp(-xx**2 / 0.2) * np.sin(2.0 * t) ** 2

    def source(t):
        F = np.zeros(grid.shape + (3,))
        F[..., 1] = f(x, t)[:, None, None]
        return F

    dt = 0.2 * grid.spacing[0]
    T = 1.5
    steps = int(round(T / dt))
    z = pf.solve_zero_harmonic(source, grid, dt, steps)
    t_end = z.times[-1]
    # Duhamel oracle with fine Gauss-Legendre quadrature
    sn, sw = np.polynomial.legendre.leggauss(200)
    s = 0.5 * t_end * (sn + 1)
    ws = 0.5 * t_end * sw
    xn, xw = np.polynomial.legendre.leggauss(200)
    idx = np.arange(n // 2 - 12, n // 2 + 13, 4)
    ref = []
    for xi in x[idx]:
        tot = 0.0
        for sk, wk in zip(s, ws):
            r = t_end - sk
            xx = xi + r * xn
            tot += wk * r * np.sum(xw * f(xx, sk))
        ref.append(0.5 * tot)
    got = z.C[idx, 0, 0, 1]
    assert np.max(np.abs(got - np.array(ref))) < 2e-3 * np.max(np.abs(ref))
    assert np.all(z.C[..., 0] == 0) and np.all(z.C[..., 2] == 0)
    assert z.bookkeeping_residual <= 1e-6
