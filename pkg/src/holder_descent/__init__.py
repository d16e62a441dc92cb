"""Fixed-stepsize gradient descent for strongly convex objectives with locally
Hoelder-continuous gradients: test problems, gradient-flow error
certificates, stepsize rules and benchmark sweeps."""

from ._accel import JIT_ENABLED, backend_name
from .descent import (RunRecord, StepsizePolicy, contraction_factor, corollary_iteration_bound,
                      corollary_stepsize, detect_stagnation, gd_step, predict_stagnation_level,
                      refined_iteration_bound, refined_stepsize, run_gd)
from .flow import (ErrorCertificate, FlowTrajectory, discretization_error_profile, estimate_M,
                   exponential_contraction_check, integrate_flow, k_u, local_consistency_check,
                   min_steps_condition, reference_flow, t_star_upper_bound)
from .problems import (CompositeQuadraticProblem, PoissonPlusProblem, ProblemSpec,
                       ScalarExampleProblem, certify_holder, certify_strong_convexity, eval_f,
                       eval_grad, finite_diff_grad_check, make_composite_problem, make_poisson_plus,
                       make_random_spd, make_scalar_example)

__version__ = "0.1.0"
