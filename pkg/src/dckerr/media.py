"""Nonlinear susceptibility fields and their line integrals.

A field is either a sum of Gaussian bumps multiplied by a smooth ball cutoff,
or samples on a :class:`~dckerr.geometry.Grid3D` with trilinear interpolation.
Both vanish identically outside the support ball.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import RegularGridInterpolator

from .geometry import Grid3D, Ray, as_direction
from .smooth import ball_cutoff

QUAD_ABS_TOL = 1e-10


class SusceptibilityField:
    """Common interface: call with points ``(..., 3)`` to get chi values."""

    support_radius: float
    domain_radius: float
    center: np.ndarray

    def _check_radii(self):
        if not self.support_radius < self.domain_radius:
            raise ValueError("support radius must be smaller than the domain radius")

    def __call__(self, x):
        raise NotImplementedError

    def is_zero(self):
        return False

    def focus_points(self, ray):
        """Arclength parameters worth flagging to adaptive quadrature."""
        return ()


@dataclass
class GaussianBumps(SusceptibilityField):
    """``sum_i a_i exp(-|x - c_i|^2 / (2 s_i^2))`` times a C-infinity cutoff.

    ``bumps`` has rows ``(a, cx, cy, cz, s)``. The cutoff equals 1 for
    ``|x - center| <= 0.9 R`` and vanishes for ``|x - center| >= R``.
    """

    bumps: np.ndarray
    support_radius: float = 1.0
    domain_radius: float = 2.0
    center: np.ndarray = None

    def __post_init__(self):
        b = np.asarray(self.bumps, dtype=float)
        self.bumps = b.reshape(-1, 5) if b.size else np.zeros((0, 5))
        if np.any(self.bumps[:, 4] <= 0):
            raise ValueError("bump widths must be positive")
        self.center = np.zeros(3) if self.center is None else np.asarray(self.center, dtype=float)
        self._check_radii()

    def is_zero(self):
        return self.bumps.shape[0] == 0 or not np.any(self.bumps[:, 0])

    def shifted(self, v):
        v = np.asarray(v, dtype=float)
        b = self.bumps.copy()
        b[:, 1:4] += v
        return GaussianBumps(b, self.support_radius, self.domain_radius, self.center + v)

    def rotated_z(self, angle):
        """Rotate bump centres (and the support centre) about the x3 axis."""
        c, s = np.cos(angle), np.sin(angle)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        b = self.bumps.copy()
        b[:, 1:4] = b[:, 1:4] @ rot.T
        return GaussianBumps(b, self.support_radius, self.domain_radius, rot @ self.center)

    def uncut(self, x):
        """Bump sum without the cutoff factor."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for a, cx, cy, cz, s in self.bumps:
            d2 = (x[..., 0] - cx) ** 2 + (x[..., 1] - cy) ** 2 + (x[..., 2] - cz) ** 2
            out += a * np.exp(-0.5 * d2 / (s * s))
        return out

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x - self.center, axis=-1)
        return self.uncut(x) * ball_cutoff(r, self.support_radius)

    def focus_points(self, ray):
        return tuple((self.bumps[:, 1:4] - ray.y) @ ray.omega)


@dataclass
class GriddedField(SusceptibilityField):
    """Node samples on a grid, trilinear in between, zero outside grid and support ball."""

    grid: Grid3D
    values: np.ndarray
    support_radius: float = 1.0
    domain_radius: float = 2.0
    center: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")
        self.center = np.zeros(3) if self.center is None else np.asarray(self.center, dtype=float)
        self._check_radii()
        self._interp = RegularGridInterpolator(
            self.grid.axes(), self.values, method="linear", bounds_error=False, fill_value=0.0
        )

    def is_zero(self):
        return not np.any(self.values)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 3)
        vals = self._interp(flat).reshape(x.shape[:-1])
        r = np.linalg.norm(x - self.center, axis=-1)
        return np.where(r < self.support_radius, vals, 0.0)


def eval_chi(field, x):
    """chi at points ``x`` (shape ``(..., 3)``); exactly 0 outside the support ball."""
    return field(x)


def _chord(field, ray):
    return ray.ball_chord(field.support_radius, field.center)


def _line_quad(field, ray, a, b):
    if b <= a:
        return 0.0
    pts = [p for p in field.focus_points(ray) if a < p < b]
    f = lambda s: float(field(ray.point(s)))
    val, _ = quad(f, a, b, epsabs=QUAD_ABS_TOL, epsrel=1e-12, limit=400, points=pts or None)
    return val


class RetardationProfile:
    """Phase retardation along one ray.

    ``tau_of_s(s) = 0.5 * e0**2 * int_{-inf}^{s} chi(y + sigma*omega) d sigma``,
    evaluated with adaptive Gauss-Kronrod quadrature over the part of the
    ray inside the support ball.
    """

    def __init__(self, field, e0_magnitude, ray):
        if e0_magnitude < 0:
            raise ValueError("e0_magnitude must be non-negative")
        self.field = field
        self.ray = ray
        self.prefactor = 0.5 * float(e0_magnitude) ** 2
        chord = _chord(field, ray)
        self.chord = chord
        if chord is None or self.prefactor == 0.0 or field.is_zero():
            self.tau_infinity = 0.0
            self._trivial = True
        else:
            self._trivial = False
            self.tau_infinity = self.prefactor * _line_quad(field, ray, *chord)

    @property
    def exit_parameter(self):
        return -np.inf if self.chord is None else self.chord[1]

    def tau_of_s(self, s):
        s = np.asarray(s, dtype=float)
        if self._trivial:
            return np.zeros_like(s)
        s_in, s_out = self.chord
        flat = s.ravel()
        order = np.argsort(flat)
        out = np.empty_like(flat)
        acc = 0.0
        last = s_in
        for idx in order:
            si = min(max(flat[idx], s_in), s_out)
            if flat[idx] >= s_out:
                out[idx] = self.tau_infinity
                continue
            if si > last:
                acc += self.prefactor * _line_quad(self.field, self.ray, last, si)
                last = si
            out[idx] = acc
        return out.reshape(s.shape)

    __call__ = tau_of_s


def retardation(field, e0_magnitude, ray):
    """Build the :class:`RetardationProfile` of ``field`` along ``ray``."""
    return RetardationProfile(field, e0_magnitude, ray)


def xray_transform(field, omega, y):
    """Full line integral of chi along ``s -> y + s*omega``."""
    ray = Ray(y, as_direction(omega))
    chord = _chord(field, ray)
    if chord is None or field.is_zero():
        return 0.0
    return _line_quad(field, ray, *chord)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def line_integrals(field, y, omega, upper=None, panels=96, chunk=1024):
    """Vectorised line integrals of chi for many parallel rays.

    Composite 8-point Gauss-Legendre on the part of each line inside the
    support ball. With ``upper`` given (same leading shape as ``y``), the
    integral stops at arclength ``upper`` instead of running to the exit,
    which gives ``2 * tau(y + upper*omega) / e0**2``.
    """
    w = as_direction(omega)
    y = np.asarray(y, dtype=float)
    lead = y.shape[:-1]
    pts = y.reshape(-1, 3)
    up = None if upper is None else np.broadcast_to(np.asarray(upper, dtype=float), lead).ravel()
    out = np.zeros(pts.shape[0])
    if field.is_zero():
        return out.reshape(lead)
    p = pts - field.center
    b = p @ w
    disc = b * b - (np.einsum("ij,ij->i", p, p) - field.support_radius**2)
    hit = disc > 0
    root = np.sqrt(np.where(hit, disc, 0.0))
    s_in = -b - root
    s_out = -b + root
    if up is not None:
        s_out = np.minimum(s_out, up)
    hit &= s_out > s_in
    idx = np.nonzero(hit)[0]
    edges = np.linspace(0.0, 1.0, panels + 1)
    mids = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 / panels
    u = (mids[:, None] + half * _GL_NODES[None, :]).ravel()
    wts = np.tile(half * _GL_WEIGHTS, panels)
    for start in range(0, idx.size, chunk):
        sel = idx[start:start + chunk]
        length = s_out[sel] - s_in[sel]
        s = s_in[sel, None] + length[:, None] * u[None, :]
        x = pts[sel, None, :] + s[..., None] * w
        out[sel] = (field(x) @ wts) * length
    return out.reshape(lead)
