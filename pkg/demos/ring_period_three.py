"""Atoms hopping around a six-site ring, one site per flip.

With enough dissipation the motion locks and the generalized imbalance
repeats every three periods, giving a sharp line at omega/3. With less
dissipation the line washes out.
"""

import numpy as np

from dtc import RingParams, RingProtocol, ring_fourier, run_ring
from dtc.meanfield_ring import localized_state

proto = RingProtocol(J=1.0, Jf=5.0, xi=np.pi / 8, T=4 * np.pi)
for gammaN in (0.2, 0.1):
    tr = run_ring(RingParams(-5.5, gammaN, 0.1), proto, localized_state(6, 1), 612)
    spec = ring_fourier(tr, W=512, transient=100)
    print(f"gammaN = {gammaN}: strongest line at {spec.dominant:.4f} omega, "
          f"omega/3 dominance {spec.dominance(1 / 3):.3g}")
