"""A Kerr cell between crossed polarizers.

The transmitted envelope depends on the retardation as sin^2 tau and is
largest for a beam polarized at 45 degrees to the bias. The first maximum
in the bias strength determines chi.

Run: python3 demos/kerr_cell.py
"""

import numpy as np

from dckerr import kerrcell as kc

cell = kc.CellSpec(a2=1.0, a3=1.0, d=2.0, e0=1.0, chi=np.pi / 2)
print(f"nominal tau = {cell.tau:.6f}")

# %% where is the transmission largest?
scan = kc.optimal_tau_scan(cell, np.linspace(0, np.pi, 1001))
print(f"envelope peaks at tau = {scan.tau_at_max:.6f} with value {scan.envelope_max:.3f}")
angles = np.linspace(0, np.pi / 2, 7)
print("polarization angle vs envelope at tau = pi/2:")
for a in angles:
    print(f"  {np.degrees(a):5.1f} deg  {kc.transmission_envelope(np.cos(a), np.sin(a), np.pi / 2):.4f}")

# %% chi from the first maximum in e0
e_star = kc.e0_at_first_max(cell.chi, cell.d)
print(f"first maximum at e0 = {e_star:.6f} -> chi = {kc.chi_from_first_max(e_star, cell.d):.15f}")

# %% the same cell through the direct solver
res = kc.simulate_cell(cell, 1 / 50)
print(f"simulated envelope {res.simulated:.4f} vs analytic {res.analytic:.4f}")
print(f"polarization ellipse half-axes {res.ellipse[0]:.3f}, {res.ellipse[1]:.3f}")
