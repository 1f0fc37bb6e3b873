import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from dckerr import direct1d as d1
from dckerr.geometry import Grid1D

SHORT = dict(T=6.2, detector=6.5, length=8.0)
MEDIUM = d1.Medium1D(kind="gaussian", amplitude=1.0, center=4.0, width=0.3, start=3.0, stop=5.0)
BEAM = d1.Beam1D(a2=1.0, a3=1.0, launch=1.5, half_length=1.0)


# ------------------------------------------------------------ constitutive

def test_invert_identity_without_susceptibility():
    D = np.random.default_rng(1).normal(size=(2, 50))
    assert np.array_equal(d1.invert_constitutive(D, 0.0), D)


def test_invert_scalar_cubic_against_bisection():
    oracle = brentq(lambda e: e + 0.1 * e**3 - 1.0, 0.0, 1.0, xtol=1e-15)
    E = d1.invert_constitutive(np.array([0.0, 1.0]), 0.1)
    assert oracle == pytest.approx(0.92170, abs=1e-5)
    assert E[1] == pytest.approx(oracle, abs=1e-13)
    assert E[0] == 0.0


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.0, 0.3))
@settings(max_examples=60, deadline=None)
def test_invert_is_odd_and_solves_relation(a, b, chi):
    D = np.array([a, b])
    E = d1.invert_constitutive(D, chi)
    assert np.allclose(d1.invert_constitutive(-D, chi), -E, atol=1e-14)
    assert np.max(np.abs(E + chi * np.dot(E, E) * E - D)) <= 1e-13 * max(1.0, np.abs(D).max())


def test_invert_reports_divergence():
    with pytest.raises(d1.NewtonDivergence):
        d1.invert_constitutive(np.array([0.0, 1e6]), -1.0)


# ------------------------------------------------------------------ scheme

def test_cfl_violation_rejected():
    grid = Grid1D(0.0, 0.1, 50)
    with pytest.raises(ValueError, match="CFL"):
        d1.make_state(grid, np.zeros((2, 50)), np.zeros(50), dt=0.095)


def test_constant_background_is_fixed_point():
    grid = Grid1D(0.0, 0.01, 400)
    q = 0.05 * np.exp(-((grid.nodes - 2.0) / 0.3) ** 2)
    E0 = np.zeros((2, grid.count))
    E0[1] = 1.3
    state = d1.make_state(grid, E0, q, dt=0.005, e0=1.3)
    start = state.E.copy()
    d1.run(state, 500)
    assert np.array_equal(state.E, start)
    assert state.constitutive_residual() <= 1e-12


@pytest.mark.parametrize("order,time_order", [(2, 2), (6, 4)])
def test_linear_periodic_energy_conserved(order, time_order):
    n = 200
    grid = Grid1D(0.0, 2 * np.pi / n, n)
    x = grid.nodes
    E0 = np.stack([np.sin(x) + 0.3 * np.cos(3 * x), np.exp(np.cos(x)) - 1.0])
    state = d1.make_state(grid, E0, np.zeros(n), dt=0.5 * grid.spacing, boundary="periodic",
                          order=order, time_order=time_order)
    d1.step(state)
    e_start = d1.discrete_energy(state)
    d1.run(state, 10_000)
    assert abs(d1.discrete_energy(state) - e_start) <= 1e-8 * abs(e_start)


def test_nonlinear_run_keeps_constitutive_residual():
    grid = Grid1D(0.0, 0.005, 800)
    x = grid.nodes
    q = 0.2 * np.exp(-((x - 2.0) / 0.3) ** 2)
    E0 = np.zeros((2, grid.count))
    E0[0] = 0.1 * np.exp(-((x - 1.0) / 0.2) ** 2)
    E0[1] = 1.0
    state = d1.make_state(grid, E0, q, dt=0.0025, e0=1.0)
    d1.run(state, 400)
    assert state.constitutive_residual() <= 1e-12


def test_blowup_detected():
    grid = Grid1D(0.0, 0.01, 100)
    E0 = np.zeros((2, 100))
    E0[0, 50] = np.nan
    state = d1.make_state(grid, E0, np.zeros(100), dt=0.005)
    with pytest.raises(d1.SolverBlowup):
        d1.run(state, 3)


# ------------------------------------------------------------ magnetic field

def test_reconstruct_H_constant_field():
    E = np.ones((20, 2, 30))
    H = d1.reconstruct_H(E, 0.01, 0.1, H0=np.array([[0.5], [-0.25]]))
    assert np.allclose(H[:, 0], 0.5) and np.allclose(H[:, 1], -0.25)


def test_reconstruct_H_plane_wave():
    # E2 = cos(x - t): dH3/dt = -dE2/dx = sin(x - t), so H3 = cos(x - t) - cos(x)
    dx, dt = 0.005, 0.0025
    x = np.arange(0, 2.0, dx)
    t = np.arange(0, 1.0 + dt / 2, dt)
    E = np.zeros((t.size, 2, x.size))
    E[:, 0] = np.cos(x[None, :] - t[:, None])
    H = d1.reconstruct_H(E, dt, dx)
    exact = np.cos(x[None, :] - t[:, None]) - np.cos(x)[None, :]
    assert np.max(np.abs(H[:, 1] - exact)) < 1e-5
    assert np.max(np.abs(H[:, 0])) == 0.0
    # right-moving wave: H3 - E2 is constant in time (unit impedance)
    assert np.max(np.abs((H[:, 1] - E[:, 0]) - (H[0, 1] - E[0, 0]))) < 1e-5


def test_reconstruct_H_faraday_residual():
    dx, dt = 0.01, 0.005
    x = np.arange(0, 3.0, dx)
    t = np.arange(0, 1.0, dt)
    E = np.zeros((t.size, 2, x.size))
    E[:, 0] = np.exp(-((x[None, :] - 1.5 + 0.5 * t[:, None]) ** 2))
    E[:, 1] = np.sin(2 * x[None, :] + t[:, None])
    H = d1.reconstruct_H(E, dt, dx)
    dE = np.gradient(E, dx, axis=-1, edge_order=2)
    curl = np.stack([-dE[:, 1], dE[:, 0]], axis=1)
    dH = np.diff(H, axis=0) / dt
    mid = 0.5 * (curl[1:] + curl[:-1])
    assert np.max(np.abs(dH + mid)) < 1e-10


# ------------------------------------------------------------- experiments

def test_free_beam_translates():
    beam = d1.Beam1D(a2=1.0, a3=0.5, launch=1.5, half_length=1.0)
    trace = d1.run_experiment(beam, d1.Medium1D(amplitude=0.0), 0.0, 1 / 40, **SHORT)
    assert trace.samples_per_period >= 20
    assert d1.free_translation_error(trace, beam, 2) < 1e-3
    assert d1.free_translation_error(trace, beam, 3) < 1e-3


@pytest.mark.parametrize("e0,amp", [(0.0, 1.0), (1.0, 0.0)])
def test_null_shifts(e0, amp):
    medium = d1.Medium1D(kind="gaussian", amplitude=amp, center=4.0, width=0.3, start=3.0, stop=5.0)
    h = 1 / 40
    d2, d3, _ = d1.measure_shifts(BEAM, medium, e0, h, **SHORT)
    assert abs(d2) <= h and abs(d3) <= h


def test_phase_law_coarse():
    h = 1 / 40
    tau = d1.tau_infinity(MEDIUM, 1.0)
    # full Gaussian integral, less the tails trimmed by the plateau cutoff
    assert tau == pytest.approx(0.5 * 0.3 * np.sqrt(2 * np.pi), rel=5e-3)
    d2, d3, trace = d1.measure_shifts(BEAM, MEDIUM, 1.0, h, **SHORT)
    assert abs(d1.wrap_angle(d2 - tau)) <= 5 * h
    assert abs(d1.wrap_angle(d3 - 3 * tau)) <= 5 * h
    assert trace.metadata["constitutive_residual"] <= 1e-12


def test_launch_inside_medium_rejected():
    with pytest.raises(ValueError, match="outside"):
        d1.run_experiment(d1.Beam1D(launch=4.0, half_length=0.5), MEDIUM, 1.0, 1 / 40, **SHORT)


def _manual_run(rows, bias_row, steps=1200):
    h = 1 / 40
    dx = h / 10
    grid = Grid1D.from_bounds(0.0, 8.0, dx)
    x = grid.nodes
    q = h * MEDIUM(x)
    env = 2 * h * BEAM.packet(x) * np.cos(x / h)
    E0 = np.outer(rows, env)
    E0[bias_row] += 1.0
    bg = np.zeros((2, grid.count))
    bg[bias_row] = 1.0 + q
    state = d1.make_state(grid, E0, q, 0.5 * dx, e0=1.0, D_bg=bg)
    _, rec = d1.run(state, steps, probe=int(round(6.5 / dx)), every=4)
    return rec


def test_frame_symmetry_swaps_components():
    """Moving the bias to the other transverse slot and swapping amplitudes mirrors the run."""
    usual = _manual_run([1.0, 0.5], bias_row=1)
    mirrored = _manual_run([0.5, 1.0], bias_row=0)
    assert np.max(np.abs(usual)) > 0.01
    assert np.max(np.abs(mirrored[:, ::-1] - usual)) < 1e-13
