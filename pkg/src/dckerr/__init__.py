"""Simulation and inversion toolkit for the DC Kerr effect.

Modules
-------
geometry    directions, rays, characteristic coordinates, grids
media       susceptibility fields, retardation and line integrals
stationary  strong stationary field from the double-phase elliptic problem
profiles    geometric-optics beam profiles, modes and zero harmonics
direct1d    direct nonlinear solver in the 1D transverse reduction
inversion   phase extraction, unwrapping, sinograms and backprojection
kerrcell    crossed-polarizer Kerr cell model
cli         experiment runner (``python -m dckerr``)
"""

__version__ = "0.1.0"
