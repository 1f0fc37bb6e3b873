"""Direct solver for the nonlinear system in its 1D transverse reduction.

Fields depend on x1 only and have components (E2, E3); the bias ``e0``
sits in the third slot. The displacement ``D = E + q |E|^2 E`` with
``q(x) = h chi(x)`` is advanced by leapfrog on ``D_tt = E_xx`` and ``E`` is
recovered by nodewise Newton. In these rescaled units the beam is
``E = e0 e3 + 2 h U(x) cos(x / h)`` at rest, and the 1/2 of it moving right
picks up phases ``tau`` (E2) and ``3 tau`` (E3) with
``tau = 1/2 e0^2 int chi``.

The default discretisation is sixth order in space with a fourth-order
modified-equation time correction
``D^{n+1} = 2 D^n - D^{n-1} + dt^2 L E^n + dt^4/12 L J^{-1} L E^n``,
which keeps the phase error of the carrier well below ``h`` at ten points
per ``h``. ``order=2, time_order=2`` gives the plain second-order leapfrog.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.integrate import cumulative_trapezoid, quad
from scipy.optimize import minimize_scalar

from .geometry import Grid1D
from .smooth import PolyBump, smooth_plateau

NEWTON_TOL = 1e-13
NEWTON_MAX_ITER = 8

# central second-derivative weights (centre, +-1, +-2, +-3), zero padded
_STENCILS = {
    2: np.array([-2.0, 1.0, 0.0, 0.0]),
    4: np.array([-5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0, 0.0]),
    6: np.array([-49.0 / 18.0, 3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0]),
}
_GHOST = 3


class NewtonDivergence(RuntimeError):
    pass


class SolverBlowup(RuntimeError):
    pass


# ----------------------------------------------------------------- kernels

@njit(cache=True)
def _newton_node(d2, d3, e2, e3, q):
    """Solve ``E + q |E|^2 E = D`` at one node from the guess (e2, e3); returns (e2, e3, residual, status)."""
    r2 = e2 + q * (e2 * e2 + e3 * e3) * e2 - d2
    r3 = e3 + q * (e2 * e2 + e3 * e3) * e3 - d3
    res = np.sqrt(r2 * r2 + r3 * r3)
    growth = 0
    it = 0
    while res > NEWTON_TOL and it < NEWTON_MAX_ITER:
        m = e2 * e2 + e3 * e3
        a = 1.0 + q * m
        f = 2.0 * q / (a + 2.0 * q * m)
        proj = e2 * r2 + e3 * r3
        e2 -= (r2 - f * e2 * proj) / a
        e3 -= (r3 - f * e3 * proj) / a
        m = e2 * e2 + e3 * e3
        r2 = e2 + q * m * e2 - d2
        r3 = e3 + q * m * e3 - d3
        new = np.sqrt(r2 * r2 + r3 * r3)
        growth = growth + 1 if new > res else 0
        res = new
        it += 1
        if growth >= 3:
            return e2, e3, res, 2
    status = 0 if res <= NEWTON_TOL else 1
    return e2, e3, res, status


@njit(cache=True)
def _invert_all(D, E, q, lo, hi):
    """Nodewise Newton on ``[lo, hi)``; elsewhere ``q = 0`` and ``E = D``."""
    n = D.shape[1]
    for c in range(2):
        for i in range(lo):
            E[c, i] = D[c, i]
        for i in range(hi, n):
            E[c, i] = D[c, i]
    worst = 0.0
    status = 0
    for i in range(lo, hi):
        e2, e3, res, st = _newton_node(D[0, i], D[1, i], E[0, i], E[1, i], q[i])
        E[0, i] = e2
        E[1, i] = e3
        worst = max(worst, res)
        status = max(status, st)
    return worst, status


def _active_range(q):
    nz = np.nonzero(q)[0]
    return (0, 0) if nz.size == 0 else (int(nz[0]), int(nz[-1]) + 1)


@njit(cache=True)
def _fill_ghosts(P, periodic):
    g = 3
    n = P.shape[1] - 2 * g
    for c in range(P.shape[0]):
        for k in range(g):
            if periodic:
                P[c, k] = P[c, n + k]
                P[c, n + g + k] = P[c, g + k]
            else:
                P[c, k] = P[c, g]
                P[c, n + g + k] = P[c, n + g - 1]


@njit(cache=True)
def _load(P, E):
    for c in range(E.shape[0]):
        for i in range(E.shape[1]):
            P[c, i + 3] = E[c, i]


@njit(cache=True)
def _apply_lap(P, out, coef, inv_dx2):
    # unrolled: a generic inner loop over the stencil is ~10x slower
    c0, c1, c2, c3 = coef[0], coef[1], coef[2], coef[3]
    for c in range(out.shape[0]):
        pc = P[c]
        oc = out[c]
        for i in range(oc.shape[0]):
            j = i + 3
            oc[i] = (c0 * pc[j] + c1 * (pc[j - 1] + pc[j + 1]) + c2 * (pc[j - 2] + pc[j + 2])
                     + c3 * (pc[j - 3] + pc[j + 3])) * inv_dx2


@njit(cache=True)
def _jacobian_solve(E, V, q, out, lo, hi):
    """``out = J(E)^{-1} V`` with ``J = (1 + q|E|^2) I + 2 q E E^T`` (Sherman-Morrison)."""
    e2a, e3a, v2, v3, o2, o3 = E[0], E[1], V[0], V[1], out[0], out[1]
    for i in range(lo):
        o2[i] = v2[i]
        o3[i] = v3[i]
    for i in range(hi, e2a.shape[0]):
        o2[i] = v2[i]
        o3[i] = v3[i]
    for i in range(lo, hi):
        e2 = e2a[i]
        e3 = e3a[i]
        qi = q[i]
        m = e2 * e2 + e3 * e3
        ia = 1.0 / (1.0 + qi * m)
        proj = 2.0 * qi / (1.0 + 3.0 * qi * m) * (e2 * v2[i] + e3 * v3[i])
        o2[i] = (v2[i] - e2 * proj) * ia
        o3[i] = (v3[i] - e3 * proj) * ia


@njit(cache=True)
def _rhs(E, q, lo, hi, coef, inv_dx2, dt, time_order, periodic, P, LE, W, LW):
    n = E.shape[1]
    _load(P, E)
    _fill_ghosts(P, periodic)
    _apply_lap(P, LE, coef, inv_dx2)
    if time_order == 4:
        _jacobian_solve(E, LE, q, W, lo, hi)
        _load(P, W)
        _fill_ghosts(P, periodic)
        _apply_lap(P, LW, coef, inv_dx2)
        s = dt * dt / 12.0
        for c in range(2):
            lc = LE[c]
            wc = LW[c]
            for i in range(n):
                lc[i] += s * wc[i]


@njit(cache=True)
def _advance(D, D_prev, D_bg, gamma, rhs, dt2, first, width):
    """Leapfrog update; the first/last ``width`` nodes damp ``D - D_bg``."""
    n = D.shape[1]
    for c in range(2):
        d, dp, bg, r = D[c], D_prev[c], D_bg[c], rhs[c]
        if first:
            for i in range(n):
                dp[i] = d[i]
                d[i] = d[i] + 0.5 * dt2 * r[i]
            continue
        for i in range(width, n - width):
            new = 2.0 * d[i] - dp[i] + dt2 * r[i]
            dp[i] = d[i]
            d[i] = new
        for i in list(range(min(width, n))) + list(range(max(n - width, width), n)):
            p = d[i] - bg[i]
            pp = dp[i] - bg[i]
            new = (2.0 * p - (1.0 - gamma[i]) * pp + dt2 * r[i]) / (1.0 + gamma[i])
            dp[i] = d[i]
            d[i] = new + bg[i]


# ----------------------------------------------------------------- API

def invert_constitutive(D, chi, guess=None):
    """Solve ``E + chi |E|^2 E = D`` for 2-vectors (E2, E3), nodewise.

    ``D`` has shape ``(2,)`` or ``(2, n)``; the third component of the
    physical field is the second entry here (the bias slot). Newton from
    ``guess`` (default ``D``), at most eight steps to residual ``<= 1e-13``.
    """
    D = np.asarray(D, dtype=float)
    single = D.ndim == 1
    D2 = np.ascontiguousarray(D.reshape(2, -1))
    q = np.ascontiguousarray(np.broadcast_to(np.asarray(chi, dtype=float), D2.shape[1:]).astype(float))
    E = D2.copy() if guess is None else np.array(np.asarray(guess, dtype=float).reshape(2, -1))
    worst, status = _invert_all(D2, E, q, *_active_range(q))
    if status == 2:
        raise NewtonDivergence(
            f"constitutive Newton diverged (residual {worst:.3e}); reduce beam amplitude or h")
    if status == 1:
        raise NewtonDivergence(f"constitutive Newton stalled at residual {worst:.3e}")
    return E[:, 0] if single else E


def sponge_profile(n, width=10, strength=0.5):
    """Quadratic damping ramp over ``width`` cells at both ends."""
    gamma = np.zeros(n)
    ramp = strength * (np.arange(width, 0, -1) / width) ** 2
    gamma[:width] = ramp
    gamma[n - width:] = ramp[::-1]
    return gamma


@dataclass
class WaveState1D:
    """Two time levels of (D, E) on a 1D grid plus solver settings."""

    grid: Grid1D
    E: np.ndarray
    D: np.ndarray
    D_prev: np.ndarray
    q: np.ndarray
    dt: float
    e0: float = 0.0
    t: float = 0.0
    step_count: int = 0
    boundary: str = "sponge"
    order: int = 6
    time_order: int = 4
    gamma: np.ndarray = None
    D_bg: np.ndarray = None
    last_residual: float = 0.0
    _work: tuple = field(default=None, repr=False)

    def __post_init__(self):
        if self.dt > 0.9 * self.grid.spacing:
            raise ValueError(f"CFL violation: dt = {self.dt:g} > 0.9 dx = {0.9 * self.grid.spacing:g}")
        if self.order not in _STENCILS or self.time_order not in (2, 4):
            raise ValueError("order must be 2, 4 or 6 and time_order 2 or 4")
        if self.boundary not in ("sponge", "periodic", "reflecting"):
            raise ValueError("boundary must be 'sponge', 'periodic' or 'reflecting'")
        n = self.grid.count
        if self.gamma is None:
            self.gamma = sponge_profile(n) if self.boundary == "sponge" else np.zeros(n)
        nz = np.nonzero(self.gamma)[0]
        self.sponge_width = 0 if nz.size == 0 else int(max(nz[nz < n // 2].max(initial=-1) + 1,
                                                           n - nz[nz >= n // 2].min(initial=n)))
        if self.D_bg is None:
            bg = np.zeros((2, n))
            bg[1] = self.e0 + self.q * self.e0**3
            self.D_bg = bg
        self._active = _active_range(self.q)
        self._work = (np.zeros((2, n + 2 * _GHOST)), np.zeros((2, n)), np.zeros((2, n)), np.zeros((2, n)))

    def rhs(self, E=None):
        P, LE, W, LW = self._work
        _rhs(self.E if E is None else E, self.q, *self._active, _STENCILS[self.order], 1.0 / self.grid.spacing**2,
             self.dt, self.time_order, self.boundary == "periodic", P, LE, W, LW)
        return LE

    def constitutive_residual(self):
        m = np.sum(self.E**2, axis=0)
        return float(np.max(np.abs(self.E + self.q * m * self.E - self.D)))


def make_state(grid, E0, q, dt, e0=0.0, **kw):
    """Rest state with field ``E0`` (shape ``(2, n)``, bias included in row 1)."""
    E0 = np.array(E0, dtype=float)
    q = np.asarray(q, dtype=float)
    D0 = E0 + q * np.sum(E0**2, axis=0) * E0
    return WaveState1D(grid, E0, D0, D0.copy(), q, dt, e0=e0, **kw)


def step(state):
    """Advance one leapfrog step in place and return the state."""
    LE = state.rhs()
    first = state.step_count == 0
    _advance(state.D, state.D_prev, state.D_bg, state.gamma, LE, state.dt**2, first, state.sponge_width)
    worst, status = _invert_all(state.D, state.E, state.q, *state._active)
    state.last_residual = worst
    if status == 2 or not np.isfinite(worst):
        bad = np.nonzero(~np.isfinite(state.E).all(axis=0))[0]
        where = f" first non-finite node {bad[0]}" if bad.size else ""
        raise SolverBlowup(f"step {state.step_count}, t = {state.t:.6g}: Newton residual {worst:.3e}{where}")
    state.t += state.dt
    state.step_count += 1
    return state


def run(state, n_steps, probe=None, every=1):
    """Advance ``n_steps``; optionally record ``E[:, probe]`` every ``every`` steps (time 0 included)."""
    rec_t, rec = [], []
    if probe is not None:
        rec_t.append(state.t)
        rec.append(state.E[:, probe].copy())
    for k in range(n_steps):
        step(state)
        if not np.isfinite(state.E[0, 0]):
            raise SolverBlowup(f"non-finite field at step {state.step_count}")
        if probe is not None and (k + 1) % every == 0:
            rec_t.append(state.t)
            rec.append(state.E[:, probe].copy())
    if not np.all(np.isfinite(state.E)):
        raise SolverBlowup(f"non-finite field after {state.step_count} steps")
    if probe is None:
        return None
    return np.array(rec_t), np.array(rec)


def discrete_energy(state):
    """Conserved leapfrog energy for the linear (q = 0) periodic scheme.

    ``|(D^{n} - D^{n-1}) / dt|^2 - <D^{n}, A D^{n-1}>`` with ``A`` the
    (modified) spatial operator, times ``dx / 2``.
    """
    dx = state.grid.spacing
    v = (state.D - state.D_prev) / state.dt
    A_prev = state.rhs(np.ascontiguousarray(state.D_prev)).copy()
    return 0.5 * dx * (float(np.sum(v * v)) - float(np.sum(state.D * A_prev)))


def reconstruct_H(E_history, dt, dx, H0=None):
    """``H(t) = H0 - int_0^t curl E`` for 1D fields.

    ``E_history`` has shape ``(nt, 2, n)`` with rows (E2, E3). In 1D
    ``curl E = (0, -dE3/dx, dE2/dx)``; the spatial derivative is second
    order and the time integral is the cumulative trapezoid rule. Returns
    ``(nt, 2, n)`` holding (H2, H3).
    """
    E_history = np.asarray(E_history, dtype=float)
    dE = np.gradient(E_history, dx, axis=-1, edge_order=2)
    curl = np.stack([-dE[:, 1], dE[:, 0]], axis=1)
    H = -cumulative_trapezoid(curl, dx=dt, axis=0, initial=0.0)
    if H0 is not None:
        H = H + np.asarray(H0, dtype=float)
    return H


# ------------------------------------------------------------ experiment

@dataclass
class Medium1D:
    """chi(x1) as a Gaussian bump times a smooth plateau cutoff, or a smooth plateau cell."""

    kind: str = "gaussian"
    amplitude: float = 1.0
    center: float = 10.0
    width: float = 0.5
    start: float = 8.0
    stop: float = 12.0
    ramp: float = 0.2

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.amplitude == 0.0:
            return np.zeros_like(x)
        cut = smooth_plateau(x, self.start, self.stop, self.ramp)
        if self.kind == "gaussian":
            return self.amplitude * np.exp(-0.5 * ((x - self.center) / self.width) ** 2) * cut
        if self.kind == "plateau":
            return self.amplitude * cut
        raise ValueError(f"unknown medium kind {self.kind!r}")

    def integral(self):
        if self.amplitude == 0.0:
            return 0.0
        val, _ = quad(self, self.start, self.stop, epsabs=1e-14, epsrel=1e-13, limit=200)
        return val

    def integral_of_square(self):
        if self.amplitude == 0.0:
            return 0.0
        val, _ = quad(lambda x: self(x) ** 2, self.start, self.stop, epsabs=1e-14, epsrel=1e-13, limit=200)
        return val

    def describe(self):
        return {k: getattr(self, k) for k in ("kind", "amplitude", "center", "width", "start", "stop", "ramp")}


@dataclass
class Beam1D:
    """Transverse core amplitudes (a2, a3) times a longitudinal packet ``g``."""

    a2: float = 1.0
    a3: float = 0.0
    launch: float = 3.0
    half_length: float = 1.5
    power: int = 6

    @property
    def packet(self):
        return PolyBump(self.launch, self.half_length, self.power)


@dataclass
class DetectorTrace:
    position: float
    t: np.ndarray
    E2: np.ndarray
    E3: np.ndarray
    h: float
    e0: float
    beam_scale: float
    metadata: dict = field(default_factory=dict)

    @property
    def samples_per_period(self):
        return 2.0 * np.pi * self.h / float(np.mean(np.diff(self.t)))


def tau_infinity(medium, e0):
    return 0.5 * e0**2 * medium.integral()


def run_experiment(beam, medium, e0, h, T=15.0, detector=16.0, length=20.0, cells_per_h=10,
                   cfl=0.5, order=6, time_order=4, record_every=None):
    """Launch the beam at rest, evolve to ``T`` and record the field at ``detector``.

    Initial field ``E = e0 e3 + 2 h U(x) cos(x / h)`` with ``U = g(x) (a2, a3)``.
    The packet and the detector must lie outside the medium.
    """
    dx = h / cells_per_h
    grid = Grid1D.from_bounds(0.0, length, dx)
    x = grid.nodes
    chi = medium(x)
    g_lo, g_hi = beam.packet.support
    if np.any(chi[(x >= g_lo) & (x <= g_hi)] != 0) or medium(np.array([detector]))[0] != 0:
        raise ValueError("beam launch region and detector must lie outside supp chi")
    if medium.amplitude != 0 and not (g_hi <= medium.start and medium.stop <= detector):
        raise ValueError("supp chi must lie between the launched packet and the detector")
    env = beam.packet(x) * np.cos(x / h)
    E0 = np.zeros((2, grid.count))
    E0[0] = 2.0 * h * beam.a2 * env
    E0[1] = e0 + 2.0 * h * beam.a3 * env
    dt = cfl * dx
    state = make_state(grid, E0, h * chi, dt, e0=e0, order=order, time_order=time_order)
    probe = int(round((detector - grid.origin) / dx))
    if record_every is None:
        record_every = max(1, int(np.floor(2.0 * np.pi * h / (20.0 * dt))))
    n_steps = int(np.ceil(T / dt))
    t, rec = run(state, n_steps, probe=probe, every=record_every)
    trace = DetectorTrace(
        position=float(x[probe]), t=t, E2=rec[:, 0], E3=rec[:, 1] - e0, h=h, e0=e0, beam_scale=h,
        metadata={
            "a2": beam.a2, "a3": beam.a3, "launch": beam.launch, "half_length": beam.half_length,
            "power": beam.power, "chi": medium.describe(), "dx": dx, "dt": dt, "length": length,
            "order": order, "time_order": time_order, "constitutive_residual": state.last_residual,
        },
    )
    return trace


def fit_phase(trace, beam, component=2, n_scan=72):
    """Least-squares phase ``delta`` of ``beam_scale a U(x_d - t) cos((x_d - t)/h + delta)``.

    Coarse scan on ``[-pi, pi)`` followed by golden-section refinement
    around the best scan point.
    """
    a = beam.a2 if component == 2 else beam.a3
    if a == 0:
        raise ValueError(f"beam has no component {component}")
    data = trace.E2 if component == 2 else trace.E3
    arg = trace.position - trace.t
    env = trace.beam_scale * a * beam.packet(arg)
    mask = env != 0
    theta = arg[mask] / trace.h
    env = env[mask]
    y = data[mask]

    def misfit(d):
        return float(np.sum((y - env * np.cos(theta + d)) ** 2))

    grid = -np.pi + 2.0 * np.pi * np.arange(n_scan) / n_scan
    k = int(np.argmin([misfit(d) for d in grid]))
    step_ = 2.0 * np.pi / n_scan
    res = minimize_scalar(misfit, bracket=(grid[k] - step_, grid[k], grid[k] + step_), method="golden",
                          options={"xtol": 1e-12})
    return float((res.x + np.pi) % (2.0 * np.pi) - np.pi)


def wrap_angle(d):
    return (np.asarray(d) + np.pi) % (2.0 * np.pi) - np.pi


def free_translation_error(trace, beam, component=2):
    """Relative L2 error of the recorded component against the exact right-moving half."""
    a = beam.a2 if component == 2 else beam.a3
    data = trace.E2 if component == 2 else trace.E3
    arg = trace.position - trace.t
    exact = trace.beam_scale * a * beam.packet(arg) * np.cos(arg / trace.h)
    return float(np.linalg.norm(data - exact) / np.linalg.norm(exact))


def measure_shifts(beam, medium, e0, h, **kw):
    """Run once and return ``(delta2, delta3, trace)`` for the components present in the beam."""
    trace = run_experiment(beam, medium, e0, h, **kw)
    d2 = fit_phase(trace, beam, 2) if beam.a2 else None
    d3 = fit_phase(trace, beam, 3) if beam.a3 else None
    return d2, d3, trace


def convergence_study(medium, e0, hs, beam=None, **kw):
    """Phase errors ``|delta2 - tau|`` and ``|delta3 - 3 tau|`` over an h sweep.

    Returns a dict with per-h errors, the fitted constant ``C`` (max of
    error / h) and empirical orders from a log-log least-squares fit.
    """
    beam = beam or Beam1D(a2=1.0, a3=1.0)
    tau = tau_infinity(medium, e0)
    rows = []
    for h in hs:
        d2, d3, _ = measure_shifts(beam, medium, e0, h, **kw)
        rows.append((h, d2, d3, abs(wrap_angle(d2 - tau)), abs(wrap_angle(d3 - 3.0 * tau))))
    hs_arr = np.array([r[0] for r in rows])
    err2 = np.array([r[3] for r in rows])
    err3 = np.array([r[4] for r in rows])

    def order(err):
        if np.any(err <= 0):
            return np.inf
        return float(np.polyfit(np.log(hs_arr), np.log(err), 1)[0])

    return {
        "tau": tau,
        "rows": rows,
        "C": float(max(np.max(err2 / hs_arr), np.max(err3 / hs_arr))),
        "order2": order(err2),
        "order3": order(err3),
    }
