"""The static field inside a nonlinear dielectric.

The potential solves a quasilinear Dirichlet problem that reduces to the
Laplace equation when h = 0. The fixed point iteration converges fast, and
the solution approaches its first-order expansion with an h^2 remainder.

Run: python3 demos/stationary_field.py
"""

import numpy as np

from dckerr import stationary as stn
from dckerr.geometry import Grid3D
from dckerr.media import GaussianBumps

grid = Grid3D.cube(2.5, 40)
chi = GaussianBumps([[1.0, 0, 0, 0, 0.5]], support_radius=1.8, domain_radius=2.5)
base = stn.DirichletProblem(grid, stn.linear_potential(1.0), chi, 0.04)

u_f = stn.harmonic_extension(base)
terms = stn.expansion_terms(base, 1, u_f=u_f)

# %% iterate for three values of h
rems = []
for h in (0.04, 0.02, 0.01):
    prob = base.with_h(h)
    sol = stn.fixed_point_solve(prob, u_f=u_f)
    rems.append(stn.expansion_remainder(prob, sol, terms))
    print(f"h = {h}: {sol.iterations} iterations, residual {sol.residual_norm:.1e}, "
          f"ratios {np.round(sol.ratios[:4], 3)}")

print("remainder ratios per halving:", [round(a / b, 3) for a, b in zip(rems, rems[1:])])

# %% the field bends slightly inside the medium
E = sol.E
c = grid.shape[0] // 2
print(f"E3 at the centre {E[c, c, c, 2]:.6f}, far from the bump {E[2, 2, c, 2]:.6f}")
