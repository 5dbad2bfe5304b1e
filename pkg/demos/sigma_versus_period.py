"""
Decay rate versus sampling period
=================================

For M = 1 and a = 0 the small-gain condition M p_a(T) e^{sigma (1 + T)} < 1
gives sigma_max = ln(1/T) / (1 + T).  Shorter periods buy faster decay.
"""

import numpy as np

from zohpde.stability import max_period, max_sigma, sigma_curve, write_sigma_curve

M, a = 1.0, 0.0
periods = np.linspace(0.01, 0.9, 90)
rows = sigma_curve(M, a, periods)
write_sigma_curve("sigma_curve.csv", rows)

for T, s in rows[::10]:
    print(f"T={T:.2f}  sigma_max={s:.4f}")

# and back: the longest period that still certifies a given rate
for sigma in (0.5, 1.0, 2.0, 4.0):
    print(f"sigma={sigma}:  T_max={max_period(M, a, sigma):.5f}")

# the worked example: M = e, a = -e
print("M=e, a=-e, T=0.1:", max_sigma(np.e, -np.e, 0.1))
