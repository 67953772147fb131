"""Bistability and stability of the nonlinear Fabry-Perot cavity.

Traces x = chi |A_in|^2 against y = chi |a_r|^2 in closed form, lists every
steady state at two drive strengths with its fluctuation verdict, and
counts how often stability coincides with a positive slope dx/dy.
CLI equivalent: ``toponet fp``.
"""

import numpy as np

from toponet.fpcavity import FPParams, fp_input_intensity, fp_solve, fp_stability

p = FPParams(omega_d=3 * np.pi / 4, r_BM=0.9)
y = np.linspace(0, 2.5, 11)
print("   y        x")
for yy, xx in zip(y, fp_input_intensity(y, p)):
    print(f"  {yy:.2f}  {xx:8.4f}")

for x in (1.0, 5.0):
    print(f"\nsteady states at x = {x}")
    for s in fp_solve(np.sqrt(x), p)[:5]:
        stable, roots = fp_stability(s, p)
        print(f"  y = {s.y:7.4f}  slope = {s.slope:+9.3f}  {'stable' if stable else 'unstable'}  max Im w_f = {roots.imag.max():+.4f}")

agree = 0
ys = np.linspace(0.05, 3, 60)
for yy in ys:
    (s,) = [s for s in fp_solve(np.sqrt(float(fp_input_intensity(yy, p))), p) if abs(s.y - yy) < 1e-8]
    agree += fp_stability(s, p)[0] == (s.slope > 0)
print(f"\nstability equals positive slope at {agree}/{len(ys)} points")
