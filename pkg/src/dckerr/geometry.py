"""Directions, phases, characteristic coordinates, rays and uniform grids."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_UNIT_TOL = 1e-12


def as_direction(omega, in_plane=False):
    """Validate and return a unit 3-vector as a float array.

    Parameters
    ----------
    omega : array_like, shape (3,)
        Candidate direction.
    in_plane : bool
        If True, additionally require ``omega . e3 == 0`` (beams used for
        inversion run perpendicular to the bias field).
    """
    w = np.asarray(omega, dtype=float).reshape(3)
    if abs(np.linalg.norm(w) - 1.0) > _UNIT_TOL:
        raise ValueError(f"direction {w} is not a unit vector")
    if in_plane and abs(w[2]) > _UNIT_TOL:
        raise ValueError(f"direction {w} is not perpendicular to e3")
    return w


def planar_direction(angle):
    """Unit vector ``(cos a, sin a, 0)``."""
    return np.array([np.cos(angle), np.sin(angle), 0.0])


def phase(t, x, omega, outgoing=False):
    """Linear phase ``-t + x.omega`` (incoming) or ``t + x.omega`` (outgoing).

    ``x`` may carry leading batch dimensions; the last axis has length 3.
    """
    proj = np.tensordot(np.asarray(x, dtype=float), np.asarray(omega, dtype=float), axes=([-1], [0]))
    return (t if outgoing else -np.asarray(t, dtype=float)) + proj


def to_characteristic(t, x, omega):
    """Map ``(t, x)`` to characteristic coordinates ``(s, y) = (t, x - t omega)``."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    return t, x - t[..., None] * np.asarray(omega) if t.ndim else x - t * np.asarray(omega)


def from_characteristic(s, y, omega):
    """Inverse of :func:`to_characteristic`: ``(t, x) = (s, y + s omega)``."""
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    return s, y + s[..., None] * np.asarray(omega) if s.ndim else y + s * np.asarray(omega)


def canonical_frame(omega, bias_dir=(0.0, 0.0, 1.0)):
    """Rotation whose rows are ``(omega, bias x omega, bias)``.

    Multiplying a world vector by the returned matrix expresses it in the
    frame where the beam runs along e1 and the bias field along e3.
    """
    w = as_direction(omega)
    b = as_direction(bias_dir)
    if abs(w @ b) > 1e-10:
        raise ValueError("beam direction must be perpendicular to the bias field")
    return np.stack([w, np.cross(b, w), b])


@dataclass(frozen=True)
class Ray:
    """Unit-speed line ``s -> y + s * omega``."""

    y: np.ndarray
    omega: np.ndarray
    s_range: tuple = (-np.inf, np.inf)

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float).reshape(3))
        object.__setattr__(self, "omega", as_direction(self.omega))

    def point(self, s):
        s = np.asarray(s, dtype=float)
        return self.y + s[..., None] * self.omega if s.ndim else self.y + s * self.omega

    def ball_chord(self, radius, center=(0.0, 0.0, 0.0)):
        """Parameters ``(s_in, s_out)`` where the ray crosses a ball, or None."""
        p = self.y - np.asarray(center, dtype=float)
        b = p @ self.omega
        disc = b * b - (p @ p - radius * radius)
        if disc <= 0.0:
            return None
        root = np.sqrt(disc)
        return -b - root, -b + root


@dataclass(frozen=True)
class Grid1D:
    origin: float
    spacing: float
    count: int

    def __post_init__(self):
        if self.spacing <= 0 or self.count < 2:
            raise ValueError("grid needs spacing > 0 and at least 2 nodes")

    @property
    def nodes(self):
        return self.origin + self.spacing * np.arange(self.count)

    @property
    def length(self):
        return self.spacing * (self.count - 1)

    @classmethod
    def from_bounds(cls, start, stop, spacing):
        count = int(round((stop - start) / spacing)) + 1
        return cls(float(start), float(spacing), count)


@dataclass(frozen=True)
class Grid3D:
    """Axis-aligned uniform node grid; arrays are indexed ``[i, j, k] <-> (x, y, z)``."""

    origin: tuple
    spacing: tuple
    counts: tuple = field(default=(2, 2, 2))

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "spacing", tuple(float(v) for v in self.spacing))
        object.__setattr__(self, "counts", tuple(int(v) for v in self.counts))
        if len(self.origin) != 3 or len(self.spacing) != 3 or len(self.counts) != 3:
            raise ValueError("Grid3D needs three axes")
        if min(self.spacing) <= 0 or min(self.counts) < 2:
            raise ValueError("grid needs spacing > 0 and at least 2 nodes per axis")

    @classmethod
    def cube(cls, half_width, n):
        """``n**3`` nodes on ``[-half_width, half_width]**3``."""
        d = 2.0 * half_width / (n - 1)
        return cls((-half_width,) * 3, (d,) * 3, (n,) * 3)

    @property
    def shape(self):
        return self.counts

    def axes(self):
        return [o + d * np.arange(n) for o, d, n in zip(self.origin, self.spacing, self.counts)]

    def mesh(self):
        """Node coordinates as an array of shape ``counts + (3,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)
