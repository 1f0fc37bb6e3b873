"""Recover chi from detector traces.

The pipeline is: windowed oscillatory integrals of each trace give
``cos tau`` and ``sin tau``; an unwrapping flood fill gives ``tau``;
``g = 2 tau / e0^2`` is the line integral of chi (a sinogram row); filtered
backprojection inverts each x3 slice.

Sign convention: a trace behaves like ``U(R - t) cos((R - t)/h + tau)``, so
``I_c = N cos tau`` and ``I_s = -N sin tau`` with ``N = 1/2 int U psi``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .geometry import Grid3D, planar_direction
from .media import GriddedField, line_integrals

NORMALIZATION_FLOOR = 1e-8
SIGN_CONVENTION = "trace ~ U(R - t) cos((R - t)/h + tau); cos tau = I_c / N, sin tau = -I_s / N"


class WindowMissesEnvelope(ValueError):
    pass


class InsufficientResolution(ValueError):
    pass


@dataclass(frozen=True)
class WindowFunction:
    """``(1 - u^2)^power`` on ``(start, stop)`` with ``u`` mapping the interval to (-1, 1)."""

    start: float
    stop: float
    power: int = 4

    def __post_init__(self):
        if not self.stop > self.start:
            raise ValueError("window needs stop > start")

    @property
    def support(self):
        return self.start, self.stop

    def __call__(self, t):
        mid = 0.5 * (self.start + self.stop)
        half = 0.5 * (self.stop - self.start)
        u = (np.asarray(t, dtype=float) - mid) / half
        return np.where(np.abs(u) < 1.0, np.clip(1.0 - u * u, 0.0, None) ** self.power, 0.0)


def window_integrals(t, values, envelope, window, h, position, scale=1.0):
    """``(I_c, I_s, N)`` by trapezoid quadrature over the last axis.

    ``values`` and ``envelope`` may carry leading batch dimensions and
    share the time axis ``t``.
    """
    t = np.asarray(t, dtype=float)
    psi = window(t)
    arg = (position - t) / h
    v = np.asarray(values, dtype=float)
    ic = trapezoid(v * (np.cos(arg) * psi), t, axis=-1)
    is_ = trapezoid(v * (np.sin(arg) * psi), t, axis=-1)
    norm = 0.5 * scale * trapezoid(np.asarray(envelope, dtype=float) * psi, t, axis=-1)
    return ic, is_, norm


def complex_amplitude(t, values, envelope, window, h, position, scale=1.0):
    """Measured ``e^{-i delta}`` for ``values ~ scale U(R - t) cos((R - t)/h + delta)``.

    The modulus carries any amplitude factor relative to ``U``.
    """
    ic, is_, norm = window_integrals(t, values, envelope, window, h, position, scale)
    if np.any(np.abs(norm) < NORMALIZATION_FLOOR):
        raise WindowMissesEnvelope("window misses envelope: normalization integral below 1e-8")
    return (ic + 1j * is_) / norm


def extract_cos_sin_tau(trace, window, envelope=None):
    """Estimates of ``(cos tau, sin tau)`` from the E2 channel of a detector trace.

    ``envelope`` holds ``U2(R - t)`` on the trace times; for traces from the
    direct solver it defaults to the recorded beam metadata.
    """
    if envelope is None:
        envelope = trace_envelope(trace)
    a = complex_amplitude(trace.t, trace.E2, envelope, window, trace.h, trace.position, trace.beam_scale)
    return float(np.real(a)), float(-np.imag(a))


def trace_envelope(trace, component=2):
    """``a_c g(R - t)`` reconstructed from the beam metadata of a 1D trace."""
    from .smooth import PolyBump

    m = trace.metadata
    g = PolyBump(m["launch"], m["half_length"], m.get("power", 6))
    amp = m["a2"] if component == 2 else m["a3"]
    return amp * g(trace.position - np.asarray(trace.t))


def arrival_window(trace, power=4):
    """Window covering the times the beam packet sits at the detector."""
    m = trace.metadata
    lo = trace.position - (m["launch"] + m["half_length"])
    hi = trace.position - (m["launch"] - m["half_length"])
    return WindowFunction(lo, hi, power)


def extract_with_windows(t, values, envelope, windows, h, position, scale=1.0):
    """Partition-of-unity estimate over a window family.

    Windows whose normalization falls below the floor are skipped; the
    rest are blended with weights equal to their normalizations, i.e.
    ``cos tau = sum I_c / sum N`` and likewise for sine.
    """
    sum_c = sum_s = sum_n = 0.0
    used = 0
    for w in windows:
        ic, is_, norm = window_integrals(t, values, envelope, w, h, position, scale)
        if np.all(np.abs(norm) >= NORMALIZATION_FLOOR):
            sum_c = sum_c + ic
            sum_s = sum_s + is_
            sum_n = sum_n + norm
            used += 1
    if used == 0:
        raise WindowMissesEnvelope("window misses envelope for every window in the family")
    return sum_c / sum_n, -sum_s / sum_n


# ----------------------------------------------------------- unwrapping

def unwrap_tau(cos_tau, sin_tau, seed=None):
    """Continuous ``tau`` from its cosine and sine over a detector grid.

    The wrapped angle ``atan2(sin, cos)`` is unwrapped by breadth-first
    flood fill from ``seed`` (default: the boundary pixel whose wrapped
    angle is closest to zero), each new pixel taking the ``2 pi`` shift
    nearest to the neighbour it was reached from.
    """
    wrapped = np.arctan2(np.asarray(sin_tau, dtype=float), np.asarray(cos_tau, dtype=float))
    shape = wrapped.shape
    if wrapped.size == 0:
        return wrapped
    if seed is None:
        edge = np.zeros(shape, dtype=bool)
        for ax in range(wrapped.ndim):
            sl = [slice(None)] * wrapped.ndim
            sl[ax] = 0
            edge[tuple(sl)] = True
            sl[ax] = -1
            edge[tuple(sl)] = True
        cand = np.argwhere(edge)
        seed = tuple(cand[np.argmin(np.abs(wrapped[edge]))])
    seed = tuple(int(s) for s in np.atleast_1d(seed))
    out = np.empty(shape)
    seen = np.zeros(shape, dtype=bool)
    out[seed] = wrapped[seed]
    seen[seed] = True
    queue = deque([seed])
    two_pi = 2.0 * np.pi
    while queue:
        cur = queue.popleft()
        base = out[cur]
        for ax in range(len(shape)):
            for step_ in (-1, 1):
                k = cur[ax] + step_
                if k < 0 or k >= shape[ax]:
                    continue
                nb = cur[:ax] + (k,) + cur[ax + 1:]
                if seen[nb]:
                    continue
                w = wrapped[nb]
                out[nb] = w + two_pi * np.round((base - w) / two_pi)
                seen[nb] = True
                queue.append(nb)
    for ax in range(len(shape)):
        if shape[ax] > 1 and np.any(np.abs(np.diff(out, axis=ax)) >= np.pi):
            raise InsufficientResolution("insufficient detector resolution: neighbour jump >= pi after unwrapping")
    return out


# ------------------------------------------------------------- sinogram

@dataclass
class Sinogram:
    """Line integrals ``g[slice, angle, offset]`` with the acquisition geometry."""

    values: np.ndarray
    angles: np.ndarray
    offsets: np.ndarray
    z: np.ndarray
    e0: float
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.values.shape


def assemble_sinogram(tau, e0, angles, offsets, z):
    """``g = 2 tau / e0^2`` with ``tau`` shaped ``(n_slices, n_angles, n_offsets)``."""
    if e0 == 0:
        raise ValueError("e0 = 0 produces no retardation signal")
    tau = np.asarray(tau, dtype=float)
    g = 2.0 * tau / e0**2
    return Sinogram(g, np.asarray(angles, float), np.asarray(offsets, float), np.asarray(z, float), float(e0),
                    {"sign_convention": SIGN_CONVENTION})


def ray_geometry(angle, offsets, z):
    """Base points ``p (e3 x omega) + z e3`` and direction for one projection angle."""
    w = planar_direction(angle)
    perp = np.array([-w[1], w[0], 0.0])
    offsets = np.asarray(offsets, dtype=float)
    y = offsets[:, None] * perp + np.array([0.0, 0.0, z])
    return y, w


def radon_slices(field, angles, offsets, z):
    """Exact-quadrature line integrals of ``field`` for every slice, angle and offset."""
    out = np.zeros((len(z), len(angles), len(offsets)))
    for i, zz in enumerate(z):
        for j, a in enumerate(angles):
            y, w = ray_geometry(a, offsets, zz)
            out[i, j] = line_integrals(field, y, w)
    return out


@dataclass
class ForwardSetup:
    """Geometric-optics acquisition: beam packet, detector plane and sampling."""

    h: float = 0.02
    detector: float = 2.0
    launch: float = -2.5
    half_length: float = 0.4
    power: int = 6
    a2: float = 1.0
    samples_per_period: int = 24

    def times(self):
        lo = self.detector - (self.launch + self.half_length)
        hi = self.detector - (self.launch - self.half_length)
        dt = 2.0 * np.pi * self.h / self.samples_per_period
        n = int(np.ceil((hi - lo) / dt)) + 1
        return np.linspace(lo, hi, n)

    def window(self):
        t = self.times()
        return WindowFunction(t[0], t[-1])

    def envelope(self, t):
        from .smooth import PolyBump

        return self.a2 * PolyBump(self.launch, self.half_length, self.power)(self.detector - t)


def synthesize_traces(tau, setup):
    """Leading-order E2 traces ``a2 g(R - t) cos((R - t)/h + tau)`` for detector pixels.

    Past the medium the retardation seen at a fixed detector pixel no longer
    changes in time, so ``tau`` is the full line value for that pixel.
    """
    t = setup.times()
    env = setup.envelope(t)
    tau = np.asarray(tau, dtype=float)
    return t, env * np.cos((setup.detector - t) / setup.h + tau[..., None])


def forward_extract(field, e0, angles, offsets, z, setup=None, chunk=64):
    """Forward model plus extraction for a whole acquisition.

    Returns ``(cos_est, sin_est, tau_true)``, each ``(n_slices, n_angles, n_offsets)``.
    """
    setup = setup or ForwardSetup()
    if field.support_radius >= setup.detector or setup.launch + setup.half_length > -field.support_radius:
        raise ValueError("beam must start and be detected outside the support of chi")
    tau_true = 0.5 * e0**2 * radon_slices(field, angles, offsets, z)
    t = setup.times()
    env = setup.envelope(t)
    win = setup.window()
    cos_est = np.empty_like(tau_true)
    sin_est = np.empty_like(tau_true)
    flat_tau = tau_true.reshape(-1, tau_true.shape[-1])
    fc = cos_est.reshape(flat_tau.shape)
    fs = sin_est.reshape(flat_tau.shape)
    for start in range(0, flat_tau.shape[0], chunk):
        blk = flat_tau[start:start + chunk]
        _, traces = synthesize_traces(blk, setup)
        amp = complex_amplitude(t, traces, env, win, setup.h, setup.detector)
        fc[start:start + chunk] = np.real(amp)
        fs[start:start + chunk] = -np.imag(amp)
    return cos_est, sin_est, tau_true


def synthetic_sinogram(field, e0, n_angles=180, n_offsets=256, z=(0.0,), radius=None, setup=None):
    """End-to-end synthetic acquisition: forward traces, extraction, unwrapping, assembly.

    Each offset line (fixed slice and angle) is unwrapped on its own since
    its two ends see no medium.
    """
    radius = field.domain_radius if radius is None else radius
    angles = np.pi * np.arange(n_angles) / n_angles
    offsets = np.linspace(-radius, radius, n_offsets)
    z = np.asarray(z, dtype=float)
    c, s, tau_true = forward_extract(field, e0, angles, offsets, z, setup)
    tau = np.empty_like(c)
    for i in range(c.shape[0]):
        for j in range(c.shape[1]):
            tau[i, j] = unwrap_tau(c[i, j], s[i, j])
    sino = assemble_sinogram(tau, e0, angles, offsets, z)
    sino.meta.update({
        "pythagorean_defect": float(np.max(np.abs(c**2 + s**2 - 1.0))),
        "tau_error": float(np.max(np.abs(tau - tau_true))),
        "h": (setup or ForwardSetup()).h,
    })
    return sino


# ------------------------------------------------------------------ FBP

def ramp_filter(projections, spacing, apodize=True):
    """Ram-Lak filtering along the last axis, optionally with a raised-cosine window.

    The band-limited spatial kernel ``1/(4 d^2)`` at 0, ``-1/(pi k d)^2`` at
    odd ``k`` is convolved through a zero-padded FFT, which avoids the DC
    bias of sampling ``|f|`` directly.
    """
    p = np.asarray(projections, dtype=float)
    n = p.shape[-1]
    size = int(2 ** np.ceil(np.log2(2 * n)))
    k = np.arange(-(n - 1), n)
    kern = np.zeros(k.size)
    kern[k == 0] = 1.0 / (4.0 * spacing**2)
    odd = k % 2 == 1
    kern[odd] = -1.0 / (np.pi * k[odd] * spacing) ** 2
    circ = np.zeros(size)
    circ[: n] = kern[n - 1:]
    circ[size - (n - 1):] = kern[: n - 1]
    H = np.real(np.fft.rfft(circ))
    if apodize:
        freq = np.fft.rfftfreq(size)
        H = H * 0.5 * (1.0 + np.cos(2.0 * np.pi * freq))
    P = np.fft.rfft(p, n=size, axis=-1)
    return np.fft.irfft(P * H, n=size, axis=-1)[..., :n] * spacing


def fbp_reconstruct(sinogram, n_grid=None, half_width=None, apodize=True):
    """Filtered backprojection, slice by slice, onto a square grid per slice.

    Returns a :class:`~dckerr.media.GriddedField` over
    ``[-half_width, half_width]^2 x [z_min, z_max]``.
    """
    vals = np.asarray(sinogram.values, dtype=float)
    n_slices, n_angles, n_off = vals.shape
    if n_angles < 8:
        raise ValueError("insufficient angular coverage: need at least 8 angles")
    offsets = sinogram.offsets
    dp = offsets[1] - offsets[0]
    half_width = float(offsets[-1]) if half_width is None else half_width
    n_grid = n_off if n_grid is None else n_grid
    axis = np.linspace(-half_width, half_width, n_grid)
    X, Y = np.meshgrid(axis, axis, indexing="ij")
    filtered = ramp_filter(vals, dp, apodize)
    recon = np.zeros((n_grid, n_grid, n_slices))
    for j, a in enumerate(sinogram.angles):
        # offset coordinate of each pixel for this projection: p = x . (e3 x omega)
        p = -X * np.sin(a) + Y * np.cos(a)
        for i in range(n_slices):
            recon[:, :, i] += np.interp(p, offsets, filtered[i, j], left=0.0, right=0.0)
    recon *= np.pi / n_angles
    z = np.asarray(sinogram.z, dtype=float)
    if n_slices == 1:
        z = np.array([z[0] - 0.5, z[0] + 0.5])
        recon = np.concatenate([recon, recon], axis=2)
    dz = (z[-1] - z[0]) / (len(z) - 1)
    grid = Grid3D((-half_width, -half_width, z[0]), (axis[1] - axis[0],) * 2 + (dz,), recon.shape)
    # the ball must contain the whole grid so nothing reconstructed is cut away
    ball = float(np.linalg.norm([half_width, half_width, max(abs(z[0]), abs(z[-1]))])) * (1.0 + 1e-9) + 1e-9
    return SliceReconstruction(grid, recon, support_radius=ball, domain_radius=2.0 * ball,
                               axis=axis, z_slices=np.asarray(sinogram.z, dtype=float))


@dataclass
class SliceReconstruction(GriddedField):
    """Gridded reconstruction that also remembers its per-slice square grid."""

    axis: np.ndarray = None
    z_slices: np.ndarray = None

    @property
    def slice_values(self):
        return self.values[:, :, : len(self.z_slices)]


def relative_error_on_slices(recon, field, inside_radius):
    """Relative L2 error of a reconstruction against ``field`` on the slice nodes within ``inside_radius``."""
    X, Y = np.meshgrid(recon.axis, recon.axis, indexing="ij")
    num = den = 0.0
    for i, zz in enumerate(recon.z_slices):
        pts = np.stack([X, Y, np.full_like(X, zz)], axis=-1)
        mask = np.linalg.norm(pts - field.center, axis=-1) < inside_radius
        truth = field(pts)
        num += float(np.sum((recon.slice_values[:, :, i] - truth)[mask] ** 2))
        den += float(np.sum(truth[mask] ** 2))
    return np.sqrt(num / den)
