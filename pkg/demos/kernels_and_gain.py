"""
Kernels and the reduced gain for g(z) = A e^{rz}
================================================

Solve both kernels numerically, compare them against the closed forms and
read off the two constants that enter the sampling bound.
"""

import numpy as np

from zohpde import (ProblemData, build_gain, check_inverse_identity, solve_kernel_k,
                    solve_kernel_l)
from zohpde.kernels import grid

A, r = 1.0, 1.0
problem = ProblemData.exp_example(A, r)

# closed forms for this plant
def k_exact(z, s):
    return -A * np.exp(r * (z - s + 1) + A * np.exp(r) * (s - z))

def l_exact(z, s):
    return -A * np.exp(r * (z - s + 1))

for N in (100, 200, 400):
    k = solve_kernel_k(problem, N)
    l = solve_kernel_l(problem, N)
    Z, S = np.meshgrid(grid(N), grid(N), indexing="ij")
    upper = Z <= S
    err_k = np.max(np.abs(k.values - k_exact(Z, S))[upper])
    err_l = np.max(np.abs(l.values - l_exact(Z, S))[upper])
    gain = build_gain(problem, k, l)
    print(f"N={N:4d}  |k - k_exact|={err_k:.2e}  |l - l_exact|={err_l:.2e}  "
          f"identity residual={check_inverse_identity(k, l):.2e}  M={gain.M:.6f}  a={gain.a:.6f}")

# the gain collapses to a single exponential, -A e^r e^{-rs}
s = grid(400)
print("max |ktilde + A e^r e^{-rs}| =", np.max(np.abs(gain.ktilde + A * np.exp(r) * np.exp(-r * s))))
