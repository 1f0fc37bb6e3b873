"""Strong stationary field E = grad(psi) from the double-phase elliptic equation.

Solves ``div(grad psi + h chi |grad psi|^2 grad psi) = 0`` in a box with
Dirichlet data by the Picard map

    psi_{k+1} = u_f - h * Lap_D^{-1} div(chi |grad psi_k|^2 grad psi_k),

where ``u_f`` is the discrete harmonic extension of the boundary data and
``Lap_D^{-1}`` is the 7-point Dirichlet Laplacian inverted by a type-I sine
transform.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import fft

from .geometry import Grid3D


class ConvergenceError(RuntimeError):
    """Raised when an iterative solve fails; ``history`` holds the monitored values."""

    def __init__(self, message, history):
        super().__init__(f"{message}; history={list(history)}")
        self.history = list(history)


class NonContractionError(ConvergenceError):
    pass


@dataclass
class DirichletProblem:
    """Box ``[-R0, R0]^3`` with boundary data ``f`` and susceptibility ``chi``.

    ``boundary`` is either a callable on points ``(..., 3)`` or an array on
    the full grid (only its boundary nodes are used).
    """

    grid: Grid3D
    boundary: object
    susceptibility: object
    h: float

    def __post_init__(self):
        if self.h < 0:
            raise ValueError("h must be non-negative")
        x = self.grid.mesh()
        if callable(self.boundary):
            self.f = np.asarray(self.boundary(x), dtype=float)
        else:
            self.f = np.asarray(self.boundary, dtype=float)
        if self.f.shape != self.grid.shape:
            raise ValueError("boundary data must live on the grid")
        self.chi = np.asarray(self.susceptibility(x), dtype=float) if self.susceptibility is not None \
            else np.zeros(self.grid.shape)
        edge = np.ones(self.grid.shape, dtype=bool)
        edge[1:-1, 1:-1, 1:-1] = False
        if np.any(self.chi[edge] != 0.0):
            raise ValueError("susceptibility support must lie strictly inside the box")

    def with_h(self, h):
        return DirichletProblem(self.grid, self.f, self.susceptibility, h)


def linear_potential(e0_magnitude):
    """Boundary data ``f = |E0| x3`` whose harmonic extension has gradient ``|E0| e3``."""
    return lambda x: e0_magnitude * np.asarray(x)[..., 2]


@dataclass
class StrongFieldSolution:
    psi: np.ndarray
    E: np.ndarray
    expansion: list
    residual_norm: float
    iterations: int
    diffs: list = field(default_factory=list)
    ratios: list = field(default_factory=list)


def laplacian7(u, spacing):
    """7-point Laplacian at interior nodes (shape ``n - 2`` per axis)."""
    out = np.zeros(tuple(n - 2 for n in u.shape))
    core = u[1:-1, 1:-1, 1:-1]
    for axis, d in enumerate(spacing):
        lo = [slice(1, -1)] * 3
        hi = [slice(1, -1)] * 3
        lo[axis] = slice(0, -2)
        hi[axis] = slice(2, None)
        out += (u[tuple(lo)] - 2.0 * core + u[tuple(hi)]) / (d * d)
    return out


def _dirichlet_eigenvalues(grid):
    lam = np.zeros(tuple(n - 2 for n in grid.counts))
    for axis, (n, d) in enumerate(zip(grid.counts, grid.spacing)):
        m = n - 2
        j = np.arange(1, m + 1)
        ev = (2.0 * np.cos(np.pi * j / (m + 1)) - 2.0) / (d * d)
        shape = [1, 1, 1]
        shape[axis] = m
        lam = lam + ev.reshape(shape)
    return lam


def poisson_dirichlet(grid, g):
    """Solve the 7-point ``Lap v = g`` with ``v = 0`` on the box boundary.

    ``g`` is given on interior nodes, or on the full grid (boundary ignored).
    Returns ``v`` on the full grid.
    """
    g = np.asarray(g, dtype=float)
    if g.shape == grid.shape:
        g = g[1:-1, 1:-1, 1:-1]
    lam = _dirichlet_eigenvalues(grid)
    v_hat = fft.dstn(g, type=1) / lam
    v = np.zeros(grid.shape)
    v[1:-1, 1:-1, 1:-1] = fft.idstn(v_hat, type=1)
    return v


def harmonic_extension(problem, tol=1e-10, max_refine=4):
    """Discrete harmonic function matching the boundary data.

    A direct sine-transform solve followed by residual correction; raises
    :class:`ConvergenceError` if the interior residual stays above ``tol``.
    """
    grid = problem.grid
    u = np.zeros(grid.shape)
    edge = np.ones(grid.shape, dtype=bool)
    edge[1:-1, 1:-1, 1:-1] = False
    u[edge] = problem.f[edge]
    history = []
    for _ in range(max_refine + 1):
        r = laplacian7(u, grid.spacing)
        res = float(np.max(np.abs(r)))
        history.append(res)
        if res <= tol:
            return u
        u -= poisson_dirichlet(grid, r)
    raise ConvergenceError("harmonic extension did not reach tolerance", history)


def gradient(psi, spacing):
    """Second-order gradient (centred inside, one-sided at the faces); shape ``(..., 3)``."""
    return np.stack(np.gradient(psi, *spacing, edge_order=2), axis=-1)


def divergence(v, spacing):
    return sum(np.gradient(v[..., a], spacing[a], axis=a, edge_order=2) for a in range(3))


def _flux(chi, g):
    return (chi * np.einsum("...i,...i->...", g, g))[..., None] * g


def residual(problem, psi, margin=2):
    """Max of ``|Lap7 psi + h div(chi |grad psi|^2 grad psi)|`` away from a boundary layer."""
    sp = problem.grid.spacing
    r = laplacian7(psi, sp) + problem.h * divergence(_flux(problem.chi, gradient(psi, sp)), sp)[1:-1, 1:-1, 1:-1]
    k = margin - 1
    if k > 0:
        r = r[k:-k, k:-k, k:-k]
    return float(np.max(np.abs(r)))


def fixed_point_solve(problem, max_iter=50, tol=1e-12, initial=None, u_f=None):
    """Picard iteration for the strong field.

    Stops once successive iterates differ by at most ``tol`` in max norm.
    Three consecutive successive-difference ratios ``>= 1`` abort with
    :class:`NonContractionError`; a single one triggers a warning.
    """
    grid = problem.grid
    sp = grid.spacing
    if u_f is None:
        u_f = harmonic_extension(problem)
    psi = u_f.copy() if initial is None else np.asarray(initial, dtype=float).copy()
    diffs, ratios = [], []
    bad = 0
    it = 0
    for it in range(1, max_iter + 1):
        if problem.h == 0.0 or not np.any(problem.chi):
            new = u_f.copy()
        else:
            rhs = divergence(_flux(problem.chi, gradient(psi, sp)), sp)
            new = u_f - problem.h * poisson_dirichlet(grid, rhs)
        d = float(np.max(np.abs(new - psi)))
        psi = new
        diffs.append(d)
        if len(diffs) >= 2 and diffs[-2] > 0:
            ratio = d / diffs[-2]
            ratios.append(ratio)
            if ratio >= 1.0 and d > tol:
                bad += 1
                warnings.warn(f"fixed-point ratio {ratio:.3g} >= 1 at iteration {it}; h may exceed h0")
                if bad >= 3:
                    raise NonContractionError("fixed-point map is not contracting", ratios)
            else:
                bad = 0
        if d <= tol:
            break
    else:
        raise ConvergenceError("fixed-point iteration hit max_iter", diffs)
    return StrongFieldSolution(
        psi=psi,
        E=gradient(psi, sp),
        expansion=[u_f],
        residual_norm=residual(problem, psi),
        iterations=it,
        diffs=diffs,
        ratios=ratios,
    )


def expansion_terms(problem, n, u_f=None):
    """Coefficients ``psi^(0..n)`` of the h-expansion of the fixed point.

    The Picard iterates are polynomials in h; iterating on coefficient lists
    truncated above ``h**n`` makes the first ``n + 1`` coefficients exact
    after ``n`` sweeps. ``psi^(0) = u_f`` and
    ``psi^(1) = -Lap_D^{-1} div(chi |grad u_f|^2 grad u_f)``.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    grid = problem.grid
    sp = grid.spacing
    if u_f is None:
        u_f = harmonic_extension(problem)
    coeffs = [u_f] + [np.zeros(grid.shape) for _ in range(n)]
    for _ in range(n):
        grads = [gradient(c, sp) for c in coeffs[:n]]
        dots = {}
        new = [u_f]
        for m in range(n):
            cubic = np.zeros(grid.shape + (3,))
            for i in range(m + 1):
                for j in range(m + 1 - i):
                    k = m - i - j
                    key = (min(i, j), max(i, j))
                    if key not in dots:
                        dots[key] = np.einsum("...a,...a->...", grads[i], grads[j])
                    cubic += dots[key][..., None] * grads[k]
            rhs = divergence(problem.chi[..., None] * cubic, sp)
            new.append(-poisson_dirichlet(grid, rhs))
        coeffs = new
    return coeffs


def expansion_remainder(problem, solution, terms):
    """``max |psi(h) - sum_j h^j psi^(j)|`` for the supplied terms."""
    approx = sum(problem.h**j * t for j, t in enumerate(terms))
    return float(np.max(np.abs(solution.psi - approx)))
