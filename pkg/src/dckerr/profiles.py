"""Weakly nonlinear geometric optics: beam, leading profile, higher modes, zero harmonics.

All internal work happens in the canonical frame: the beam runs along e1
and the bias field points along e3. The leading profile on a ray solves a
diagonal complex system, so

    A(s) = (A1(0) e^{-i tau}, A2(0) e^{-i tau}, A3(0) e^{-3i tau}),

and the real profile is ``U0 = Re(conj(A) e^{i theta})`` with
``theta = (x . omega - t) / h``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import cumulative_simpson

from .geometry import Grid3D, Ray, canonical_frame
from .media import RetardationProfile, line_integrals
from .smooth import PolyBump, smooth_step, smooth_step_derivative

# phase multipliers of the diagonal leading system in the canonical frame
PHASE_MULTIPLIERS = np.array([1.0, 1.0, 3.0])
E1 = np.array([1.0, 0.0, 0.0])


# ---------------------------------------------------------------- beam

def _core_potential(r0, a2, a3, taper):
    """``q = (a3 x2 - a2 x3) c(r)`` with ``c = 1`` for ``r <= r0`` and 0 beyond ``r0 + taper``."""

    def q(x2, x3):
        r = np.hypot(x2, x3)
        return (a3 * x2 - a2 * x3) * smooth_step((r0 + taper - r) / taper)

    def grad(x2, x3):
        r = np.hypot(x2, x3)
        c = smooth_step((r0 + taper - r) / taper)
        dc = -smooth_step_derivative((r0 + taper - r) / taper) / taper
        rs = np.where(r > 0, r, 1.0)
        lin = a3 * x2 - a2 * x3
        return a3 * c + lin * dc * x2 / rs, -a2 * c + lin * dc * x3 / rs

    return q, grad


def _fd_grad(q, step=1e-5):
    def grad(x2, x3):
        d2 = (q(x2 + step, x3) - q(x2 - step, x3)) / (2 * step)
        d3 = (q(x2, x3 + step) - q(x2, x3 - step)) / (2 * step)
        return d2, d3

    return grad


@dataclass
class BeamSpec:
    """Initial beam ``U_init = (0, -d3 rho, d2 rho)`` with ``rho = g(x1) q(x2, x3)``.

    ``g`` is a compact longitudinal packet placing the beam away from the
    medium at ``t = 0``; ``q`` is the transverse potential. The curl form
    makes ``U_init`` divergence free and orthogonal to e1 for any ``q``.
    """

    transverse: object
    transverse_grad: object
    longitudinal: PolyBump
    r0: float
    a2: float
    a3: float
    h: float

    def polarization(self, x):
        """Transverse vector ``(0, -d3 q, d2 q)`` at frame points ``(..., 3)``."""
        x = np.asarray(x, dtype=float)
        d2, d3 = self.transverse_grad(x[..., 1], x[..., 2])
        d2 = np.broadcast_to(d2, x.shape[:-1])
        d3 = np.broadcast_to(d3, x.shape[:-1])
        return np.stack([np.zeros(x.shape[:-1]), -d3, d2], axis=-1)

    def U_init(self, x, d1=0):
        """``d1``-th derivative along x1 of the initial amplitude at frame points."""
        x = np.asarray(x, dtype=float)
        return self.longitudinal.derivative(x[..., 0], d1)[..., None] * self.polarization(x)

    def rho(self, x):
        x = np.asarray(x, dtype=float)
        return self.longitudinal(x[..., 0]) * self.transverse(x[..., 1], x[..., 2])


def make_beam(rho=None, r0=1.0, a2=1.0, a3=0.0, h=0.02, launch=-2.0, length=0.4,
              taper=0.5, rho_grad=None, power=6):
    """Build a :class:`BeamSpec`.

    Parameters
    ----------
    rho : callable (x2, x3) -> array, optional
        Transverse potential. Defaults to the core potential
        ``(a3 x2 - a2 x3)`` tapered to zero between ``r0`` and ``r0 + taper``,
        for which ``U_init = (0, a2, a3)`` inside the core.
    rho_grad : callable, optional
        Analytic ``(d2 rho, d3 rho)``; central differences are used if missing.
    launch, length : float
        Centre and half-length of the longitudinal packet along x1.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if rho is None:
        if a2 == 0 and a3 == 0:
            raise ValueError("a constant core needs (a2, a3) != (0, 0)")
        rho, rho_grad = _core_potential(r0, a2, a3, taper)
    elif rho_grad is None:
        rho_grad = _fd_grad(rho)
    return BeamSpec(rho, rho_grad, PolyBump(launch, length, power), r0, a2, a3, h)


def split_initial(beam, omega=E1):
    """Incoming and outgoing halves ``1/2 U_init(x -+ t omega)`` as callables of ``(t, x)``."""
    w = np.asarray(omega, dtype=float)

    def a_in(t, x):
        return 0.5 * beam.U_init(np.asarray(x) - np.asarray(t)[..., None] * w)

    def a_out(t, x):
        return 0.5 * beam.U_init(np.asarray(x) + np.asarray(t)[..., None] * w)

    return a_in, a_out


# ------------------------------------------------------ leading profile

@dataclass
class RayProfileU0:
    """Leading complex amplitude on one ray, components in the canonical frame."""

    ray: Ray
    initial: np.ndarray
    retardation: RetardationProfile
    zero_mode_vanishes: bool = True

    def amplitude(self, s):
        tau = np.asarray(self.retardation(s))
        return self.initial * np.exp(-1j * PHASE_MULTIPLIERS * tau[..., None])

    __call__ = amplitude


def propagate_U0(beam, field, e0, ray, initial=None):
    """Leading profile on ``ray`` (direction perpendicular to e3).

    ``initial`` overrides ``A(0) = U_init(y)``; it is projected onto the
    plane orthogonal to the ray so transversality holds exactly.
    """
    frame = canonical_frame(ray.omega)
    if initial is None:
        a0 = beam.U_init(frame @ ray.y).astype(complex)
    else:
        a0 = np.array(initial, dtype=complex).reshape(3)
    a0[0] = 0.0
    return RayProfileU0(ray, a0, RetardationProfile(field, e0, ray))


def phase_retardation(field, e0, t, x, omega=E1):
    """``tau(t, y) = 1/2 e0^2 int_{-inf}^{t} chi(y + sigma omega) d sigma`` at ``y = x - t omega``."""
    x = np.asarray(x, dtype=float)
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
    y = x - t[..., None] * np.asarray(omega)
    return 0.5 * e0**2 * line_integrals(field, y, omega, upper=t)


def evaluate_leading_field(beam, field, e0, t, x, include_outgoing=False):
    """Leading-order electric field at canonical-frame points.

    ``h^(1/2) e0 e3 + h^(3/2) (0, U2(y) cos(phi/h + tau), U3(y) cos(phi/h + 3 tau))``
    with ``y = x - t e1`` and ``phi = x1 - t``. With ``include_outgoing`` the
    left-moving half ``h^(3/2) U_init(x + t e1) cos((x1 + t)/h)``, which
    never meets the nonlinearity, is added.
    """
    h = beam.h
    x = np.asarray(x, dtype=float)
    t_arr = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
    y = x - t_arr[..., None] * E1
    theta = (x[..., 0] - t_arr) / h
    u = beam.U_init(y)
    if field is None or e0 == 0:
        tau = np.zeros(x.shape[:-1])
    else:
        tau = phase_retardation(field, e0, t_arr, x)
    out = np.zeros(x.shape)
    out[..., 2] += np.sqrt(h) * e0
    out += h**1.5 * u * np.cos(theta[..., None] + PHASE_MULTIPLIERS * tau[..., None])
    if include_outgoing:
        out += h**1.5 * beam.U_init(x + t_arr[..., None] * E1) * np.cos((x[..., 0] + t_arr) / h)[..., None]
    return out


def polarization_ellipse(A2, A3):
    """Half-axes (major, minor) and orientation of ``theta -> Re(A e^{i theta})``.

    The curve is ``M (cos theta, sin theta)`` with
    ``M = [[Re A2, -Im A2], [Re A3, -Im A3]]``; the singular values of ``M``
    are the half-axes and the leading left singular vector gives the
    orientation, measured from the x2 axis in ``[0, pi)``.
    """
    if A2 == 0 and A3 == 0:
        raise ValueError("polarization ellipse needs (A2, A3) != (0, 0)")
    m = np.array([[np.real(A2), -np.imag(A2)], [np.real(A3), -np.imag(A3)]], dtype=float)
    u, sv, _ = np.linalg.svd(m)
    orientation = np.arctan2(u[1, 0], u[0, 0]) % np.pi
    return float(sv[0]), float(sv[1]), float(orientation)


# ------------------------------------------------------- nonzero modes

@dataclass
class ModeSolution:
    order: int
    mode: int
    s: np.ndarray
    values: np.ndarray


def solve_nonzero_modes(k, sources, s, tau):
    """Non-zero Fourier modes of the order-``k+1`` profile on a ray.

    Parameters
    ----------
    k : int
        Profile order of the sources.
    sources : dict
        ``{l: f_l}`` with ``f_l`` complex, shape ``(len(s), 3)``.
    s, tau : ndarray
        Ray samples and the retardation at those samples.

    Each mode is
    ``(i/2l) int_0^s diag(e^{i l m (tau(s) - tau(sigma))}) f_l(sigma) d sigma``
    with ``m = (1, 1, 3)``, evaluated by cumulative composite Simpson.
    """
    s = np.asarray(s, dtype=float)
    tau = np.asarray(tau, dtype=float)
    out = []
    for ell in sorted(sources):
        if ell == 0:
            raise ValueError("mode 0 is a zero harmonic; use solve_zero_harmonic")
        if abs(ell) > k + 2:
            raise ValueError(f"mode {ell} lies outside [-{k + 2}, {k + 2}]")
        f = np.asarray(sources[ell], dtype=complex).reshape(s.size, 3)
        ph = ell * PHASE_MULTIPLIERS[None, :] * tau[:, None]
        g = np.exp(-1j * ph) * f
        # cumulative_simpson is real-only; integrate the two parts separately
        integral = (cumulative_simpson(g.real, x=s, axis=0, initial=0.0)
                    + 1j * cumulative_simpson(g.imag, x=s, axis=0, initial=0.0))
        out.append(ModeSolution(k, ell, s, (1j / (2 * ell)) * np.exp(1j * ph) * integral))
    return out


# -------------------------------------------------------- zero harmonic

def c2_source(A, A_t, A_tt, e0, chi):
    """Theta-average of the cubic source that drives the order-2 zero harmonic.

    Inputs are the complex amplitude of ``U0`` and its first two time
    derivatives (components last) and chi at the same points. Uses
    ``<Re(conj(p) e^{i th})_i Re(conj(q) e^{i th})_j> = 1/2 Re(p_i conj(q_j))``.
    """
    A, A_t, A_tt = (np.asarray(a, dtype=complex) for a in (A, A_t, A_tt))
    bias = np.array([0.0, 0.0, e0])

    def avg_dot(p, q):
        return 0.5 * np.real(np.einsum("...i,...i->...", p, np.conj(q)))

    def avg_vec(p, q_scalar):
        return 0.5 * np.real(p * np.conj(q_scalar)[..., None])

    b_t = A_t @ bias
    b_tt = A_tt @ bias
    b0 = A @ bias
    total = (2.0 * avg_dot(A_t, A_t) + 2.0 * avg_dot(A, A_tt))[..., None] * bias
    total = total + 2.0 * avg_vec(A, b_tt) + 4.0 * avg_vec(A_t, b_t) + 2.0 * avg_vec(A_tt, b0)
    return -np.asarray(chi)[..., None] * total


class BeamOnGrid:
    """Leading amplitude of a beam (along e1) sampled on fixed points for all times.

    At fixed ``x`` the phase factor ``exp(-i m tau)`` does not depend on
    ``t`` because the retardation only sees the ray behind ``x``; time
    derivatives therefore fall on the longitudinal packet alone.
    """

    def __init__(self, beam, field, e0, points):
        self.beam = beam
        self.points = np.asarray(points, dtype=float)
        self.pol = beam.polarization(self.points)
        if field is None or e0 == 0 or field.is_zero():
            tau = np.zeros(self.points.shape[:-1])
            self.chi = np.zeros(self.points.shape[:-1]) if field is None else field(self.points)
        else:
            tau = 0.5 * e0**2 * line_integrals(field, self.points, E1, upper=np.zeros(self.points.shape[:-1]))
            self.chi = field(self.points)
        self.carrier = self.pol * np.exp(-1j * PHASE_MULTIPLIERS * tau[..., None])
        self.e0 = e0

    def amplitude(self, t, dt_order=0):
        g = self.beam.longitudinal.derivative(self.points[..., 0] - t, dt_order)
        return (-1.0) ** dt_order * g[..., None] * self.carrier

    def c2_source(self, t):
        return c2_source(self.amplitude(t), self.amplitude(t, 1), self.amplitude(t, 2), self.e0, self.chi)


def zero_harmonic_source(k, beam, field, e0, grid):
    """Source of the order-``k`` zero harmonic as a callable of ``t`` on ``grid``.

    Orders 0 and 1 have no source. Order 2 is :func:`c2_source`; higher
    orders need the full profile hierarchy, which is not assembled here.
    """
    if k in (0, 1):
        zero = np.zeros(grid.shape + (3,))
        return lambda t: zero
    if k == 2:
        return BeamOnGrid(beam, field, e0, grid.mesh()).c2_source
    raise NotImplementedError("zero-harmonic sources are only assembled up to order 2")


@dataclass
class ZeroHarmonic:
    order: int
    grid: Grid3D
    dt: float
    times: np.ndarray
    C: np.ndarray
    snapshots: list = dc_field(default_factory=list)
    norms: np.ndarray = None
    bookkeeping_residual: float = 0.0

    def is_zero(self):
        return not np.any(self.C) and all(not np.any(c) for c in self.snapshots)


def _fwd_grad(u, sp):
    return np.stack([(np.roll(u, -1, axis=a) - u) / sp[a] for a in range(3)], axis=-1)


def _bwd_div(v, sp):
    return sum((v[..., a] - np.roll(v[..., a], 1, axis=a)) / sp[a] for a in range(3))


def _periodic_lap(u, sp):
    out = np.zeros_like(u)
    for a in range(3):
        out += (np.roll(u, -1, axis=a) - 2.0 * u + np.roll(u, 1, axis=a)) / sp[a] ** 2
    return out


def solve_zero_harmonic(source, grid, dt, n_steps, order=2, save_every=0, check_tol=1e-6):
    """Leapfrog solve of ``C_tt - Lap C = -grad G + F`` with ``G_tt = div F``, zero data.

    The box is periodic. ``G`` (the double time integral of ``div F``) is
    advanced by the same leapfrog, and the gradient (forward) and
    divergence (backward) differences compose to the 7-point Laplacian, so
    ``div C = G`` holds discretely. The a posteriori check
    ``max |D_tt div C - div F| <= check_tol`` is recorded and enforced.
    """
    sp = grid.spacing
    limit = 0.9 * min(sp) / np.sqrt(3.0)
    if dt > limit:
        raise ValueError(f"CFL violation: dt = {dt:g} exceeds 0.9 dx / sqrt(3) = {limit:g}")
    shape = grid.shape
    F0 = source(0.0)
    C_prev = np.zeros(shape + (3,))
    G_prev = np.zeros(shape)
    C = 0.5 * dt**2 * F0
    G = 0.5 * dt**2 * _bwd_div(F0, sp)
    div_prev, div_cur = np.zeros(shape), _bwd_div(C, sp)
    worst = 0.0
    norms = [0.0, float(np.max(np.abs(C)))]
    snaps = []
    for n in range(1, n_steps):
        t = n * dt
        F = source(t)
        divF = _bwd_div(F, sp)
        lap = np.stack([_periodic_lap(C[..., a], sp) for a in range(3)], axis=-1)
        C_next = 2.0 * C - C_prev + dt**2 * (lap - _fwd_grad(G, sp) + F)
        G_next = 2.0 * G - G_prev + dt**2 * divF
        div_next = _bwd_div(C_next, sp)
        res = (div_next - 2.0 * div_cur + div_prev) / dt**2 - divF
        worst = max(worst, float(np.max(np.abs(res))))
        C_prev, C, G_prev, G = C, C_next, G, G_next
        div_prev, div_cur = div_cur, div_next
        norms.append(float(np.max(np.abs(C))))
        if save_every and (n + 1) % save_every == 0:
            snaps.append(C.copy())
    if worst > check_tol:
        raise RuntimeError(f"divergence bookkeeping residual {worst:.3e} exceeds {check_tol:g}")
    return ZeroHarmonic(order, grid, dt, dt * np.arange(n_steps + 1)[: len(norms)], C, snaps,
                        np.array(norms), worst)
