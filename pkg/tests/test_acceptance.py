"""Acceptance suite: one PASS/FAIL line per criterion.

Run ``pytest tests/test_acceptance.py -v`` (the lines are printed in the
terminal summary) or ``python tests/test_acceptance.py``.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from zohpde import (FunctionSpec, ProblemData, StateProfile, TriangularKernel, check_inverse_identity,
                    demo_initial_condition, forward_transform, inverse_transform, max_period,
                    max_sigma, open_loop_test, p_a, reconstruct_y, simulate_fd, solve_kernel_k,
                    solve_kernel_l)
from zohpde.kernels import grid
from zohpde.stability import eigen_rhs, fit_log_rate

from conftest import closed_form_k, closed_form_l, example_kernels, example_run

E = math.e
ROUNDOFF = 1e-12
RESULTS = []

# nonlocal term and boundary feedback so both kernels carry discretisation error
NONLOCAL = ProblemData(g=FunctionSpec.exp_example(1.0, 1.0),
                       f=FunctionSpec.polynomial([[1.0, 0.5], [-0.5, 0.0]], dim=2),
                       p=FunctionSpec.polynomial([0.2]))


def report(num, title, ok, detail, started):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {title} ({detail}; {time.time() - started:.1f}s)"
    RESULTS.append(line)
    print(line)
    assert ok, line


def kernel_error(K, fn):
    N = K.N
    Z, S = np.meshgrid(grid(N), grid(N), indexing="ij")
    mask = Z <= S
    return float(np.max(np.abs(K.values[mask] - fn(Z, S)[mask])))


def envelope_margin(run, sigma=1.0):
    """max over grid t of |v(t)| e^{sigma t} / sup|v0|, and max |v(tau_i)| / sup|v0|."""
    N = run.N
    v = run.v_right[N:]
    sup0 = run.initial_sup
    ratio = float(np.max(np.abs(v) * np.exp(sigma * run.t)) / sup0)
    idx = run.schedule.indices
    at_samples = float(np.max(np.abs(v[idx[idx <= run.n_steps]])) / sup0)
    return ratio, at_samples


def test_criterion_1_sigma_bound():
    t0 = time.time()
    s = max_sigma(E, -E, 0.1)
    report(1, "sigma bound for M=e, a=-e, T=0.1", 1.0568 <= s <= 1.0588, f"sigma_max={s:.6f}", t0)


def test_criterion_2_closed_form_kernels():
    t0 = time.time()
    errs, gains = {}, {}
    for N in (200, 400):
        _, k, l, gain = example_kernels(N)
        errs[N] = (kernel_error(k, closed_form_k), kernel_error(l, closed_form_l))
        gains[N] = gain
    # a kernel reproduced to rounding has no discretisation error left to shrink
    ratios = [errs[200][i] / errs[400][i] if errs[200][i] > ROUNDOFF else math.nan
              for i in range(2)]
    g = gains[200]
    ok = (max(errs[200]) <= 1e-3 and all(3.0 <= r <= 5.0 for r in ratios if not math.isnan(r))
          and abs(g.M - E) <= 1e-3 and abs(g.a + E) <= 1e-3)
    report(2, "kernels match closed forms", ok,
           f"err k={errs[200][0]:.2e} l={errs[200][1]:.2e}, "
           f"ratios {'/'.join('exact' if math.isnan(r) else f'{r:.2f}' for r in ratios)}, "
           f"M={g.M:.5f} a={g.a:.5f}", t0)


def test_criterion_3_open_loop_sharpness():
    t0 = time.time()
    rep = open_loop_test(1.0, 1.0)
    lam = rep.lambda_
    residual = abs(eigen_rhs(1.0, lam) - 1.0)
    problem, _, _, _ = example_kernels(200)
    fd = simulate_fd(problem, None, None, demo_initial_condition(), 8.0, 1000, open_loop=True)
    _, rate = fit_log_rate(fd.supnorm_trace.t, fd.supnorm_trace.values, 2.0, 7.0, envelope=False)
    ok = (0.5819 <= rep.threshold <= 0.5821 and not rep.stable and residual <= 1e-10
          and abs(rate - lam) <= 0.05 * lam)
    report(3, "open-loop threshold, eigenvalue and FD growth", ok,
           f"threshold={rep.threshold:.6f}, lambda={lam:.10f}, residual={residual:.1e}, "
           f"fd rate={rate:.4f}", t0)


def test_criterion_4_envelope():
    t0 = time.time()
    ratio, at_samples = envelope_margin(example_run(1000))
    ok = ratio <= 1.05 and at_samples <= 1e-6
    report(4, "decay envelope at sigma=1, T=0.1", ok,
           f"max |v|e^t/sup|v0|={ratio:.4f}, max |v(tau_i)|/sup|v0|={at_samples:.1e}", t0)


def test_criterion_5_jittered_schedules():
    t0 = time.time()
    worst, worst_s, bad = 0.0, 0.0, []
    for seed in range(100):
        run = example_run(1000, kind="jittered", seed=seed)
        gaps = np.diff(run.schedule.times)
        ratio, at_samples = envelope_margin(run)
        worst, worst_s = max(worst, ratio), max(worst_s, at_samples)
        if ratio > 1.05 or at_samples > 1e-6 or gaps.max() > 0.1 + 1e-12:
            bad.append(seed)
    report(5, "100 jittered schedules keep the envelope", not bad,
           f"worst ratio={worst:.4f}, worst sample value={worst_s:.1e}, failing seeds={bad}", t0)


def test_criterion_6_dual_pathway():
    t0 = time.time()
    y0 = demo_initial_condition()
    errs = {}
    for N in (1000, 2000):
        problem, k, l, _ = example_kernels(N)
        run = example_run(N)
        fd = simulate_fd(problem, run.schedule, k, y0, 8.0, N, snapshot_times=(1, 2, 4))
        errs[N] = max(float(np.max(np.abs(fd.profiles[t].values - reconstruct_y(run, l, t).values)))
                      for t in (1, 2, 4))
    ok = errs[1000] <= 2e-2 and errs[2000] <= 0.55 * errs[1000]
    report(6, "FD and IDE reconstruction agree", ok,
           f"err N=1000 {errs[1000]:.2e}, N=2000 {errs[2000]:.2e}, "
           f"ratio {errs[1000] / errs[2000]:.2f}", t0)


def test_criterion_7_structural_identities():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    coeffs = [rng.normal(size=4) for _ in range(10)]
    trip, ident = {}, {}
    for N in (200, 400):
        k, l = solve_kernel_k(NONLOCAL, N), solve_kernel_l(NONLOCAL, N)
        z = grid(N)
        errs = []
        for c in coeffs:
            y = StateProfile(0.0, np.polynomial.polynomial.polyval(z, c) + np.sin(3 * z + c[0]))
            back = inverse_transform(forward_transform(y, k), l)
            errs.append(float(np.max(np.abs(back.values - y.values))))
        trip[N] = max(errs)
        ident[N] = check_inverse_identity(k, l)
    trip_ratio, ident_ratio = trip[200] / trip[400], ident[200] / ident[400]

    mono_bad = trip_bad = 0
    for _ in range(1000):
        M, a, T = rng.uniform(0.05, 5.0), rng.uniform(-3.0, 3.0), rng.uniform(1e-3, 1.0)
        t1, t2 = np.sort(rng.uniform(0, 3, 2))
        if p_a(a, t1) > p_a(a, t2) + 1e-15:
            mono_bad += 1
        s = max_sigma(M, a, T)
        if isinstance(s, float) and s > 1e-3 and abs(max_period(M, a, s) - T) > 1e-8:
            trip_bad += 1
    ok = (trip[200] <= 1e-3 and ident[200] <= 2e-3 and trip_ratio >= 3.0 and ident_ratio >= 3.0
          and mono_bad == 0 and trip_bad == 0)
    report(7, "structural identities", ok,
           f"round trip {trip[200]:.2e} (ratio {trip_ratio:.2f}), identity {ident[200]:.2e} "
           f"(ratio {ident_ratio:.2f}), p_a violations {mono_bad}, period round-trip "
           f"violations {trip_bad}", t0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
