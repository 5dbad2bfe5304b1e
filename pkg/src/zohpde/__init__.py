"""Sampled-data (zero-order-hold) boundary control of 1-D hyperbolic PDEs with non-local terms."""

from .functions import FunctionSpec, InputError, ProblemData, demo_initial_condition
from .kernels import (ConvergenceError, GainProfile, TriangularKernel, build_gain,
                      check_inverse_identity, kernel_residuals, solve_kernel_k, solve_kernel_l)
from .ide_sim import (HistoryBuffer, IdeRun, NumericalError, SamplingSchedule, StateProfile,
                      Trace, forward_transform, history_from_initial, ide_step,
                      inverse_transform, make_schedule, ode_form_step, reconstruct_y,
                      solve_ide, solve_ode_form, transport_mild, zoh_input)
from .stability import (OpenLoopReport, StabilityReport, fit_envelope, max_period, max_sigma,
                        open_loop_test, p_a, verify_unstable_mode)
from .fd_oracle import FdRun, controller_u, simulate_fd

__version__ = "0.1.0"
