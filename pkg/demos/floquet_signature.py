"""Subharmonic response of the driven dimer at N = 20.

The second Floquet mode sits at half the drive frequency with a lifetime of
many periods, and the imbalance of an atom cloud started on site 2 flips
sign every period while it slowly decays.
"""

import numpy as np

from dtc import DimerParams, DriveProtocol, build_imbalance, evolve_state, flip_superoperator, propagate_piecewise, spectral_decompose

N = 20
p = DimerParams.from_scaled(N, -4.0, 0.1)
drive = DriveProtocol.two_step(4.0, 1.0, np.pi / 8, 2.5 * np.pi)

report = spectral_decompose(propagate_piecewise(p, drive), flip_superoperator(N))
print(f"omega = {report.omega:.4f}")
for m in report.modes[:4]:
    print(f"  theta = {m.theta_re:+.3e} {m.theta_im:+.4f}i   theta_im/omega = {m.theta_im / report.omega:.3f}"
          f"   parity {m.parity}")

rho0 = np.zeros((N + 1, N + 1), complex)
rho0[0, 0] = 1.0                                   # everything on site 2
traj = evolve_state(rho0, p, drive, 30, {"O": build_imbalance(p.basis)})
print("\nperiod  <O>")
for k, o in zip(traj.period_index, traj.values["O"].real):
    print(f"{k:6d}  {o:+.4f}")
