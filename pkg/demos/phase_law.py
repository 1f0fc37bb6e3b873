"""Birefringence under a bias field, measured with the direct 1D solver.

A short packet crosses a Gaussian slab of chi. The component perpendicular
to the bias picks up a phase tau, the parallel one 3 tau. Halving h halves
the gap between measurement and prediction.

Run: python3 demos/phase_law.py
"""

import numpy as np

from dckerr import direct1d as d1

medium = d1.Medium1D(kind="gaussian", amplitude=1.6, center=10.0, width=0.5)
beam = d1.Beam1D(a2=1.0, a3=1.0)
e0 = 1.0

tau = d1.tau_infinity(medium, e0)
print(f"predicted retardation tau = {tau:.6f}, 3 tau = {3 * tau:.6f}")

# %% one run, and what the detector sees
h = 1 / 50
d2, d3, trace = d1.measure_shifts(beam, medium, e0, h)
print(f"h = 1/50: delta2 = {d2:.5f}  delta3 = {d3:.5f}")
print(f"  trace: {trace.t.size} samples, {trace.samples_per_period:.1f} per period")

# %% without the bias the medium is invisible
d2_off, d3_off, _ = d1.measure_shifts(beam, medium, 0.0, h)
print(f"e0 = 0: delta2 = {d2_off:.2e}  delta3 = {d3_off:.2e}")

# %% convergence in h
study = d1.convergence_study(medium, e0, [1 / 50, 1 / 100])
print("\n     h      |d2 - tau|   |d3 - 3tau|")
for h, _, _, e2, e3 in study["rows"]:
    print(f"  {h:.4f}   {e2:.3e}    {e3:.3e}")
print(f"error / h at most {study['C']:.2f}; orders {study['order2']:.2f}, {study['order3']:.2f}")

# %% magnetic field from a recorded field history (plane-wave check)
x = np.linspace(0, 2 * np.pi, 200)
t = np.linspace(0, 1, 101)
E = np.zeros((t.size, 2, x.size))
E[:, 0] = np.cos(x[None] - t[:, None])
H = d1.reconstruct_H(E, t[1] - t[0], x[1] - x[0])
print(f"\nplane wave: max |H3 - E2 + cos x| = {np.max(np.abs(H[:, 1] - E[:, 0] + np.cos(x))):.1e}")
