"""Kerr cell between crossed polarizers.

A beam polarized along ``(0, a2, a3)`` leaves the cell with its E2 and E3
parts retarded by ``tau`` and ``3 tau``. The analyser passes
``(0, -a3, a2) / |a|``, leaving an oscillation whose energy envelope is
``a2^2 a3^2 / (a2^2 + a3^2) sin^2(tau)`` on the carrier ``sin^2(phi/h + 2 tau)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from . import direct1d
from .inversion import complex_amplitude, trace_envelope, arrival_window
from .profiles import polarization_ellipse


@dataclass(frozen=True)
class CellSpec:
    a2: float
    a3: float
    d: float
    e0: float
    chi: float

    def __post_init__(self):
        if self.a2 == 0 and self.a3 == 0:
            raise ValueError("cell needs (a2, a3) != (0, 0)")
        if self.d <= 0:
            raise ValueError("polarizer separation d must be positive")

    @property
    def tau(self):
        """Nominal retardation ``1/2 e0^2 chi d`` of an ideal sharp-edged cell."""
        return 0.5 * self.e0**2 * self.chi * self.d


def transmission_envelope(a2, a3, tau):
    """Energy envelope ``a2^2 a3^2 / (a2^2 + a3^2) sin^2 tau`` behind the analyser."""
    s = a2 * a2 + a3 * a3
    if np.any(s == 0):
        raise ValueError("transmission needs (a2, a3) != (0, 0)")
    return a2 * a2 * a3 * a3 / s * np.sin(tau) ** 2


def transmission_carrier(phase_over_h, tau):
    """Fast factor ``sin^2(phi/h + 2 tau)`` multiplying the envelope."""
    return np.sin(np.asarray(phase_over_h) + 2.0 * np.asarray(tau)) ** 2


@dataclass
class ScanResult:
    tau_at_max: float
    envelope_max: float
    degenerate: bool


def optimal_tau_scan(cell, tau_grid, refine=True):
    """Retardation maximizing the transmitted envelope over ``tau_grid``.

    With ``refine`` the grid maximum is polished by bounded scalar
    minimization inside its neighbouring cells. A beam with a single
    component transmits nothing and is flagged ``degenerate``.
    """
    tau_grid = np.asarray(tau_grid, dtype=float)
    env = transmission_envelope(cell.a2, cell.a3, tau_grid)
    if not np.any(env > 0):
        return ScanResult(float("nan"), 0.0, True)
    k = int(np.argmax(env))
    best = float(tau_grid[k])
    if refine:
        lo = tau_grid[max(k - 1, 0)]
        hi = tau_grid[min(k + 1, tau_grid.size - 1)]
        res = minimize_scalar(lambda t: -transmission_envelope(cell.a2, cell.a3, t), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-12})
        best = float(res.x)
    return ScanResult(best, float(transmission_envelope(cell.a2, cell.a3, best)), False)


def chi_from_first_max(e0_at_first_max, d):
    """chi from the bias at the first transmission maximum: ``1/2 e0^2 chi d = pi/2``."""
    if e0_at_first_max <= 0 or d <= 0:
        raise ValueError("e0 and d must be positive")
    return np.pi / (e0_at_first_max**2 * d)


def e0_at_first_max(chi, d):
    """Inverse of :func:`chi_from_first_max`."""
    if chi <= 0 or d <= 0:
        raise ValueError("chi and d must be positive")
    return float(np.sqrt(np.pi / (chi * d)))


def e0_scan(cell, e0_values):
    """``(e0, envelope)`` table for the nominal cell retardation."""
    e0_values = np.asarray(e0_values, dtype=float)
    tau = 0.5 * e0_values**2 * cell.chi * cell.d
    return np.column_stack([e0_values, transmission_envelope(cell.a2, cell.a3, tau)])


def cell_medium(cell, h, center=10.0, ramp_cells=10):
    """Smooth plateau of height chi whose integral is ``chi d``; ramps have width ``10 h``."""
    ramp = ramp_cells * h
    half = 0.5 * (cell.d + ramp)
    return direct1d.Medium1D(kind="plateau", amplitude=cell.chi, start=center - half, stop=center + half,
                             ramp=ramp)


@dataclass
class CellResult:
    tau: float
    simulated: float
    analytic: float
    amplitudes: tuple
    ellipse: tuple
    trace: object


def simulate_cell(cell, h, **kw):
    """Direct 1D run through the cell, then analyser projection and envelope extraction.

    The projected trace ``(-a3 E2 + a2 E3)/|a|`` equals
    ``h A g(R - t) sin(phi/h + 2 tau)``; its amplitude ``A`` is read off with
    the windowed integrals and the simulated envelope is ``A^2 / 4``. The
    analytic value uses ``tau`` of the actual plateau profile. The complex
    E2 and E3 amplitudes also give the polarization ellipse.
    """
    beam = direct1d.Beam1D(a2=cell.a2, a3=cell.a3, launch=kw.pop("launch", 3.0),
                           half_length=kw.pop("half_length", 1.5))
    medium = cell_medium(cell, h, center=kw.pop("center", 10.0))
    if medium.start <= beam.launch + beam.half_length:
        raise ValueError("cell too long for the default layout")
    trace = direct1d.run_experiment(beam, medium, cell.e0, h, **kw)
    tau = direct1d.tau_infinity(medium, cell.e0)
    norm = np.hypot(cell.a2, cell.a3)
    projected = (-cell.a3 * trace.E2 + cell.a2 * trace.E3) / norm
    unit_env = trace_envelope(direct1d.DetectorTrace(trace.position, trace.t, trace.E2, trace.E3, h, cell.e0,
                                                     trace.beam_scale, dict(trace.metadata, a2=1.0)))
    win = arrival_window(trace)
    amp = abs(complex_amplitude(trace.t, projected, unit_env, win, h, trace.position, trace.beam_scale))
    A2 = A3 = 0j
    if cell.a2:
        A2 = cell.a2 * complex_amplitude(trace.t, trace.E2, cell.a2 * unit_env, win, h, trace.position,
                                         trace.beam_scale)
    if cell.a3:
        A3 = cell.a3 * complex_amplitude(trace.t, trace.E3, cell.a3 * unit_env, win, h, trace.position,
                                         trace.beam_scale)
    ellipse = polarization_ellipse(A2, A3)
    return CellResult(tau, amp**2 / 4.0, float(transmission_envelope(cell.a2, cell.a3, tau)), (A2, A3), ellipse,
                      trace)
