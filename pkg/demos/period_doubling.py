"""Mean-field attractors of the driven dimer as the interaction grows.

Weak interaction leaves a fixed point of the stroboscopic map; past the
critical value every random initial state locks onto a two-cycle.
"""

import numpy as np

from dtc import DriveProtocol, MfParams
from dtc.meanfield_dimer import cell_seed, critical_interaction, scan_point

drive = DriveProtocol.two_step(4.0, 1.0, np.pi / 8, np.pi)
print(f"undriven self-trapping threshold at gammaN = 0.2: UN = {critical_interaction(0.2):.3f}")

for cell, UN in enumerate([-1.5, -2.0, -2.5, -3.0, -3.5]):
    seeds = [cell_seed(0, cell, i) for i in range(4)]
    _, labels = scan_point(MfParams(UN, 0.2, 0.3, drive), seeds)
    print(f"UN = {UN:+.1f}: " + ", ".join(labels))
