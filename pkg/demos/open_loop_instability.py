"""
Open-loop instability
=====================

Without feedback the plant with g(z) = A e^{rz} is stable only for
A < r / (e^r - 1).  Above the threshold an exponential mode grows at the
rate lambda, which the finite-difference run reproduces.
"""

import numpy as np

from zohpde import ProblemData, demo_initial_condition, open_loop_test, simulate_fd
from zohpde.stability import fit_log_rate, verify_unstable_mode

for A in (0.3, 0.5, 1.0, 2.0):
    rep = open_loop_test(A, 1.0)
    lam = "-" if rep.lambda_ is None else f"{rep.lambda_:.6f}"
    print(f"A={A}:  threshold={rep.threshold:.6f}  stable={rep.stable}  lambda={lam}")

rep = open_loop_test(1.0, 1.0)
print("mode residual, N=400:", verify_unstable_mode(1.0, 1.0, rep.lambda_, 400))

fd = simulate_fd(ProblemData.exp_example(1.0, 1.0), None, None, demo_initial_condition(),
                 8.0, 1000, open_loop=True)
_, rate = fit_log_rate(fd.supnorm_trace.t, fd.supnorm_trace.values, 2.0, 7.0, envelope=False)
print(f"fitted growth on [2, 7]: {rate:.4f}  (lambda = {rep.lambda_:.4f})")
