"""Multistable Kerr steady states of a 24x12 cylinder.

Continues the total intensity against the drive at two frequencies, picks
the states with |chi| N_p = 5 and reports where their light sits and
whether they are dynamically stable.  CLI equivalents: ``toponet sweep``,
``toponet steady`` and ``toponet stability``.
"""

import numpy as np

from toponet import NetworkConfig
from toponet.fluct import stability_roots
from toponet.kerrsteady import continuation_sweep, cylinder_circuit, observables, row_weight, states_at_total

cfg = NetworkConfig(Nx=24, Ny=12, theta0=np.pi / 2, geometry="Cylinder", r_BM=0.9, chi=1.0)
c = cylinder_circuit(cfg, 1, 0.26)

for w, top in ((0.22, np.sqrt(10.0)), (0.045, 1.0)):
    curve = continuation_sweep(c, w, (0.01, top))
    print(f"w_d = {w}/L: {len(curve.states)} points, {len(curve.folds)} folds, up to {curve.max_coexisting()} coexisting states")
    for i in curve.folds:
        print(f"  fold at drive {curve.drive[i]:.4f}, total {curve.total[i]:.4f}")
    for s in states_at_total(curve, 5.0):
        _, table = observables(s)
        res = stability_roots(s)
        print(
            f"  |chi|N_p = 5 at drive {abs(s.A_in) ** 2:.4f}: boundary weight {row_weight(s):.3f}, "
            f"brightest entry (direction, row) {np.unravel_index(table.argmax(), table.shape)}, "
            f"max Im w_f {res.roots.imag.max():+.2e} -> {'stable' if res.stable else 'unstable'}"
        )
