"""Squeezing spectra of the reflected light around a stable edge state.

Probes the edge state of the 24x12 cylinder at momentum 0.52 and prints
S+ and S- with the bosonic relation S+^2 - S-^2 = 1 as a check.
CLI equivalent: ``toponet squeeze``.
"""

import numpy as np

from toponet import NetworkConfig
from toponet.drive import find_peaks
from toponet.fluct import bogoliubov_response
from toponet.kerrsteady import continuation_sweep, cylinder_circuit, states_at_total

cfg = NetworkConfig(Nx=24, Ny=12, theta0=np.pi / 2, geometry="Cylinder", r_BM=0.9, chi=1.0)
c = cylinder_circuit(cfg, 1, 0.26)
(state,) = states_at_total(continuation_sweep(c, 0.22, (0.01, np.sqrt(10.0))), 5.0)

grid = np.linspace(0, 1.5, 301)
_, sp = bogoliubov_response(state, 0.52, 1.0, 0.0, grid)
print(f"max |S+^2 - S-^2 - 1| = {np.abs(sp.bosonic_defect).max():.1e}")
print(" w_f      S+       S-")
for i in find_peaks(sp.S_minus, 0.05):
    print(f" {grid[i]:.3f}  {sp.S_plus[i]:.4f}  {sp.S_minus[i]:.4f}")
