"""Where can the output angle |chi| sit when two opposing rotors are gone?

Two things have to hold at once. The output y2 needs enough control
effectiveness (r_B >= 1), and the internal dynamics left over once y2 and
altitude are pinned must be stable (A1 Hurwitz). This script sweeps |chi|
over the open interval (zeta, zeta + 180 deg) and draws a one-line map of
the verdicts.

    python3 demos/chi_region.py
"""
import numpy as np

from quadftc import FailureConfig, VehicleParams, chi_sweep, trim

SYMBOL = {"admissible": "#", "unstable": "x", "low-effectiveness": ".", "singular": "|"}

params = VehicleParams()
failure = FailureConfig.double((1, 3))
tr = trim(params, failure)
print(f"spinning trim: r_bar = {tr.r_bar:.2f} rad/s, omega_bar = {tr.omega_bar:.1f} rad/s")
print(f"zeta = {np.degrees(params.zeta):.2f} deg (no effectiveness on y2 there)")

res = chi_sweep(params, failure)
deg = np.degrees(res.chi)
line = "".join(SYMBOL[v] for v in res.verdicts[::4])
print(f"\n{deg[0]:.0f} deg {line} {deg[-1]:.0f} deg")
print("  # admissible   x unstable internal dynamics   . r_B < 1\n")

for lo, hi in res.admissible_intervals():
    print(f"admissible band: {np.degrees(lo):.1f} .. {np.degrees(hi):.1f} deg")

for d in (70, 90, 105, 140, 180):
    i = int(np.argmin(np.abs(deg - d)))
    re1, re2 = res.real_parts[i]
    print(f"  |chi| = {d:3d}: max Re = {max(re1, re2):+7.2f}  r_B = {res.r_B[i]:.2f}  "
          f"-> {res.verdicts[i]}")
