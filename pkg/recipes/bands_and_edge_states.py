"""Bulk gaps of the torus and the chiral edge branches of the cylinder.

Prints the open gaps of a 48x48 network at flux pi/2 and, inside one gap,
the edge-localized cylinder modes of each polarization sector with the sign
of their group velocity.  CLI equivalent: ``toponet bands``.
"""

import numpy as np

from toponet import NetworkConfig
from toponet.linspec import band_structure, find_gaps
from toponet.netmodel import kx_grid

N = 48
k = kx_grid(N)
torus = band_structure(NetworkConfig(Nx=N, Ny=N, geometry="Torus"), 1, k)
gaps = find_gaps(torus, min_width=0.05)
print(f"{len(gaps)} open gaps (Re E L):")
for lo, hi in gaps:
    print(f"  [{lo:+.4f}, {hi:+.4f}]")

lo, hi = gaps[len(gaps) // 2]
print(f"\nedge modes in [{lo:+.3f}, {hi:+.3f}]")
for sector in (1, -1):
    cyl = band_structure(NetworkConfig(Nx=N, Ny=N, geometry="Cylinder"), sector, k)
    for side in ("top", "bottom"):
        pts = [
            (kx, m.energy.real)
            for kx, modes in zip(k, cyl.modes)
            for m in modes
            if lo < m.energy.real < hi and (m.edge_weight_top if side == "top" else m.edge_weight_bottom) > 0.6
        ]
        kk, ee = np.array(pts).T
        v = np.sign(np.polyfit(kk, ee, 1)[0])
        print(f"  sector {sector:+d} {side:6s}: {len(pts)} kx points, group velocity sign {v:+.0f}")
