"""Smooth compactly supported profile functions used for media, beams and windows."""

import numpy as np


def _psi(u):
    out = np.zeros_like(u, dtype=float)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def smooth_step(u):
    """C-infinity step: 0 for ``u <= 0``, 1 for ``u >= 1``."""
    u = np.asarray(u, dtype=float)
    a = _psi(u)
    b = _psi(1.0 - u)
    return a / (a + b)


def smooth_step_derivative(u):
    """Derivative of :func:`smooth_step` with respect to ``u``."""
    u = np.asarray(u, dtype=float)
    inside = (u > 0) & (u < 1)
    uc = np.where(inside, u, 0.5)
    a = np.exp(-1.0 / uc)
    b = np.exp(-1.0 / (1.0 - uc))
    val = a * b * (1.0 / uc**2 + 1.0 / (1.0 - uc) ** 2) / (a + b) ** 2
    return np.where(inside, val, 0.0)


def ball_cutoff(r, radius, inner_fraction=0.9):
    """Equal to 1 for ``r <= inner_fraction * radius`` and 0 for ``r >= radius``."""
    r = np.asarray(r, dtype=float)
    r_in = inner_fraction * radius
    return smooth_step((radius - r) / (radius - r_in))


def smooth_plateau(x, start, stop, ramp):
    """C-infinity plateau equal to 1 on ``[start + ramp, stop - ramp]``, 0 outside ``[start, stop]``."""
    x = np.asarray(x, dtype=float)
    return smooth_step((x - start) / ramp) * smooth_step((stop - x) / ramp)


class PolyBump:
    """``(1 - u**2)**power`` with ``u = (x - center) / half_width``, zero for ``|u| >= 1``.

    Derivatives up to second order are available analytically through
    :meth:`derivative`, which is all the beam and window code needs.
    """

    def __init__(self, center, half_width, power=6):
        if half_width <= 0:
            raise ValueError("half_width must be positive")
        if power < 3:
            raise ValueError("power must be at least 3 for a C2 bump")
        self.center = float(center)
        self.half_width = float(half_width)
        self.power = int(power)

    @property
    def support(self):
        return self.center - self.half_width, self.center + self.half_width

    def __call__(self, x):
        return self.derivative(x, 0)

    def derivative(self, x, order=1):
        u = (np.asarray(x, dtype=float) - self.center) / self.half_width
        inside = np.abs(u) < 1.0
        q = np.where(inside, 1.0 - u * u, 0.0)
        p = self.power
        if order == 0:
            val = q**p
        elif order == 1:
            val = -2.0 * p * u * q ** (p - 1) / self.half_width
        elif order == 2:
            val = (-2.0 * p * q ** (p - 1) + 4.0 * p * (p - 1) * u * u * q ** (p - 2)) / self.half_width**2
        else:
            raise ValueError("only derivatives up to order 2 are implemented")
        return np.where(inside, val, 0.0)

    def integral(self):
        """Exact integral over the real line."""
        from math import gamma, sqrt, pi

        p = self.power
        return self.half_width * sqrt(pi) * gamma(p + 1) / gamma(p + 1.5)
