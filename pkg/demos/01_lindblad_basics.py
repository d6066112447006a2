"""Lindblad dynamics basics: Rabi oscillations, dephasing, steady states.

Run:  python demos/01_lindblad_basics.py
"""

import numpy as np

from fss import (
    CollapseChannel,
    DensityMatrix,
    LindbladModel,
    build_two_level,
    evolve,
    steady_state,
)
from fss.units import mhz_to_angular

# --- resonant Rabi oscillations --------------------------------------------
# A 100 MHz drive flips the spin in t_pi = 1/(2*100 MHz) = 5 ns.
model = build_two_level(omega_mhz=100.0, delta_mhz=0.0, gamma1_mhz=0.0, gamma2_mhz=0.0)
times = np.linspace(0.0, 20.0, 201)
traj = evolve(model, DensityMatrix.pure(2, 1), times)
p_down = traj.population(0)
print("resonant Rabi: P_down(5 ns) =", round(float(np.interp(5.0, times, p_down)), 6))
print("analytic max deviation:",
      f"{np.max(np.abs(p_down - np.sin(np.pi * 0.1 * times) ** 2)):.2e}")

# --- dephasing damps the oscillation ----------------------------------------
noisy = build_two_level(100.0, 0.0, gamma1_mhz=0.5, gamma2_mhz=3.7)
traj = evolve(noisy, DensityMatrix.pure(2, 1), times)
print("with Gamma2/2pi = 3.7 MHz: P_down(5 ns) =", round(traj.population(0)[50], 4))

# --- driven, damped steady state ---------------------------------------------
# On resonance the excited population saturates at s/(2(1+s)), s = 2 Omega^2/gamma^2.
sx = np.array([[0, 1], [1, 0]], dtype=complex)
omega, gamma = 40.0, 25.0
driven = LindbladModel(
    dim=2,
    h0=(mhz_to_angular(omega) / 2) * sx,
    channels=(CollapseChannel(gamma, np.array([[0, 1], [0, 0]], dtype=complex)),),
)
ss = steady_state(driven)
s = 2 * (omega / gamma) ** 2
print("steady state: excited population =", round(ss.population(1), 6),
      "(analytic", round(s / (2 * (1 + s)), 6), ")")
