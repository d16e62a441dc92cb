"""Gradient flow ``du/dt = -grad f(u)`` and its forward-Euler error certificate.

The reference trajectory is produced by fixed-step integration with
``refinement`` substeps per reported interval and checked against a run
at twice the refinement.  Gradient descent with step ``tau = T/K`` is the
forward-Euler discretisation of the same flow; :func:`discretization_error_profile`
measures ``E_l = ||u_l - u(tau l)||`` against the envelope ``C_E tau^alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import AccuracyError, PreconditionError, RangeError

DEFAULT_REFINEMENT = 64
MAX_REFINEMENT = 1 << 14
M_SAFETY = 1.05
M_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class FlowTrajectory:
    times: np.ndarray
    states: np.ndarray
    refinement: int
    problem_label: str
    tolerance: float = 0.0
    self_check_gap: float = 0.0
    method: str = "rk4"

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")

    @property
    def spacing(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0


@dataclass(frozen=True, eq=False)
class ErrorCertificate:
    tau: float
    K: int
    E: np.ndarray
    bound: float
    C_E: float
    M: float
    beta_bar: float
    passed: bool
    binding_constraint: str
    K_required: int
    guaranteed: bool
    euler_states: np.ndarray = field(repr=False)
    reference: FlowTrajectory = field(repr=False)

    @property
    def times(self) -> np.ndarray:
        return self.tau * np.arange(self.K + 1)

    @property
    def max_error(self) -> float:
        return float(np.max(self.E))


@dataclass
class CheckReport:
    """Worst ratio of observed quantity to its bound, with a verdict."""

    worst_ratio: float
    passed: bool
    ratios: np.ndarray = field(repr=False)
    slack: float = 0.0


def default_tolerance(u0) -> float:
    return 1e-8 * (1.0 + float(np.linalg.norm(u0)))


def _report_count(T: float, report_step: float) -> int:
    if T == 0.0:
        return 0
    count = int(round(T / report_step))
    if count < 1 or abs(count * report_step - T) > 1e-9 * max(T, report_step):
        raise PreconditionError(f"report_step {report_step!r} does not divide T {T!r}")
    return count


def integrate_flow(problem, u0, T: float, report_step: float, refinement: int = DEFAULT_REFINEMENT,
                   tol: Optional[float] = None, method: str = "rk4") -> FlowTrajectory:
    """Reference trajectory on ``[0, T]`` sampled every ``report_step``.

    Integrates once at ``refinement`` and once at ``2 * refinement``
    substeps per report interval; the finer run is returned.  Raises
    :class:`AccuracyError` when the two endpoints differ by more than
    ``tol`` (default ``1e-8 (1 + ||u0||)``).
    """
    u0 = problem._check(u0)
    if T < 0.0 or report_step <= 0.0:
        raise PreconditionError("need T >= 0 and report_step > 0")
    if refinement < 1:
        raise PreconditionError("refinement must be at least 1")
    tol = default_tolerance(u0) if tol is None else tol
    count = _report_count(float(T), float(report_step))
    times = report_step * np.arange(count + 1)
    if count == 0:
        return FlowTrajectory(times, u0[None, :].copy(), refinement, problem.label, tol, 0.0, method)
    args = (problem.Q, problem.c, problem.weight, problem.alpha, u0)
    coarse = kernels.integrate(*args, report_step / refinement, refinement, count, method)
    fine = kernels.integrate(*args, report_step / (2 * refinement), 2 * refinement, count, method)
    gap = float(np.linalg.norm(coarse[-1] - fine[-1]))
    if not gap <= tol:
        raise AccuracyError(f"refinement {refinement} vs {2 * refinement}: endpoint gap "
                            f"{gap:.3e} exceeds tolerance {tol:.3e}", coarse[-1], fine[-1])
    return FlowTrajectory(times, fine, 2 * refinement, problem.label, tol, gap, method)


def reference_flow(problem, u0, T: float, report_step: float, refinement: int = DEFAULT_REFINEMENT,
                   tol: Optional[float] = None, method: str = "rk4",
                   max_refinement: int = MAX_REFINEMENT) -> FlowTrajectory:
    """:func:`integrate_flow`, doubling ``refinement`` until the self-check passes."""
    while True:
        try:
            return integrate_flow(problem, u0, T, report_step, refinement, tol, method)
        except AccuracyError:
            if 2 * refinement > max_refinement:
                raise
            refinement *= 2


def exponential_contraction_check(trajectory: FlowTrajectory, mu: float, u_star,
                                  slack: Optional[float] = None) -> CheckReport:
    """``||u(t) - u*|| <= exp(-mu t) ||u0 - u*||`` at every recorded time."""
    slack = 1e-6 + trajectory.tolerance if slack is None else slack
    dist = np.linalg.norm(trajectory.states - np.asarray(u_star), axis=1)
    envelope = np.exp(-mu * trajectory.times) * dist[0]
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(envelope > 0.0, dist / envelope, np.where(dist > 0.0, np.inf, 1.0))
    passed = bool(np.all(dist <= envelope * (1.0 + slack) + trajectory.tolerance))
    return CheckReport(float(np.max(ratios)), passed, ratios, slack)


def estimate_M(trajectory: FlowTrajectory, problem, safety: float = M_SAFETY,
               floor: float = M_FLOOR) -> float:
    """Safety-scaled maximum gradient norm over the recorded states."""
    norms = np.linalg.norm(problem.grads(trajectory.states), axis=1)
    peak = float(np.max(norms)) * safety
    return max(peak, floor)


def t_star_upper_bound(mu: float, d0: float, eta: float) -> float:
    """``max(0, log(d0/eta)/mu)``, the exit time bound for the ``eta`` ball."""
    if not eta > 0.0:
        raise ValueError("eta must be positive")
    if d0 <= eta:
        return 0.0
    return math.log(d0 / eta) / mu


def ceil_int(x: float) -> int:
    """Ceiling that ignores rounding noise at integers (relative 1e-9)."""
    if not math.isfinite(x):
        raise RangeError(f"cannot take the ceiling of {x!r}")
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, abs(x)):
        return int(r)
    return int(math.ceil(x))


TERM_NAMES = (
    "T",
    "4*mu*T",
    "M*T/delta",
    "C_E^(1/alpha)*T/delta^(1/alpha)",
    "(2*beta^2)^(1/p)*T^(1+1/p)/C_E^(2(1-alpha)/p)",
)


def step_condition_terms(T, mu, M, delta, alpha, beta) -> np.ndarray:
    """The five lower bounds on K, with ``p = (1-alpha)^2 + alpha^2``."""
    T, mu, M, delta, alpha, beta = (np.float64(x) for x in (T, mu, M, delta, alpha, beta))
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        C_E = beta * M**alpha / mu
        p = (1.0 - alpha) ** 2 + alpha**2
        terms = np.array([
            T,
            4.0 * mu * T,
            M * T / delta,
            C_E ** (1.0 / alpha) * T / delta ** (1.0 / alpha),
            (2.0 * beta**2) ** (1.0 / p) * T ** (1.0 + 1.0 / p) / C_E ** (2.0 * (1.0 - alpha) / p),
        ], dtype=np.float64)
    for name, value in zip(TERM_NAMES, terms):
        if not math.isfinite(value):
            raise RangeError(f"step condition term {name} is not finite")
    return terms


def min_steps_condition(T: float, mu: float, M: float, delta: float, alpha: float,
                        beta: float) -> tuple[int, str]:
    """Smallest K meeting the step condition, and the binding term(s).

    Terms within 1e-9 relative of the maximum are all reported, joined by
    ``" | "``.
    """
    if not (T > 0 and mu > 0 and M > 0 and delta > 0 and beta > 0 and 0 < alpha <= 1):
        raise PreconditionError("min_steps_condition needs positive parameters and alpha in (0, 1]")
    terms = step_condition_terms(T, mu, M, delta, alpha, beta)
    top = float(np.max(terms))
    binding = " | ".join(name for name, v in zip(TERM_NAMES, terms) if v >= top * (1.0 - 1e-9))
    return max(1, ceil_int(top)), binding


def k_u_value(eta, mu, beta, M, T_star, alpha) -> float:
    """Un-rounded ``mu^(-1/alpha) beta^(1/alpha) M T* eta^(-1/alpha)``."""
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        value = float(np.float64(mu) ** (-1.0 / alpha) * np.float64(beta) ** (1.0 / alpha)
                      * M * T_star * np.float64(eta) ** (-1.0 / alpha))
    if not math.isfinite(value):
        raise RangeError("K_u overflowed")
    return value


def k_u(eta: float, mu: float, beta: float, M: float, T_star: float, alpha: float) -> int:
    if not (eta > 0 and mu > 0 and beta > 0 and M > 0 and T_star > 0 and 0 < alpha <= 1):
        raise PreconditionError("k_u needs positive arguments")
    return max(1, ceil_int(k_u_value(eta, mu, beta, M, T_star, alpha)))


def local_consistency_check(problem, trajectory: FlowTrajectory, tau: float, beta_bar: float,
                            M: Optional[float] = None) -> CheckReport:
    """One-step residual ``||u(t) - tau grad f(u(t)) - u(t+tau)||`` vs ``beta_bar tau^(1+alpha)``.

    ``trajectory`` must be sampled at spacing ``tau``.  ``M`` defaults to
    :func:`estimate_M` on the trajectory and enforces ``tau < delta/M``.
    """
    M = estimate_M(trajectory, problem) if M is None else M
    delta = problem.spec.delta
    if not tau < delta / M:
        raise PreconditionError(f"tau = {tau:g} is not below delta/M = {delta / M:g}")
    if len(trajectory.times) > 1 and abs(trajectory.spacing - tau) > 1e-9 * tau:
        raise PreconditionError("trajectory spacing differs from tau")
    S = trajectory.states
    if len(S) < 2:
        return CheckReport(0.0, True, np.zeros(0), trajectory.tolerance)
    G = problem.grads(S[:-1])
    residual = np.linalg.norm(S[:-1] - tau * G - S[1:], axis=1)
    bound = beta_bar * tau ** (1.0 + problem.alpha)
    ratios = residual / bound
    passed = bool(np.all(residual <= bound + trajectory.tolerance))
    return CheckReport(float(np.max(ratios)), passed, ratios, trajectory.tolerance)


def discretization_error_profile(problem, u0, T: float, K: int,
                                 ode_refinement: int = DEFAULT_REFINEMENT,
                                 tol: Optional[float] = None, M: Optional[float] = None,
                                 method: str = "rk4") -> ErrorCertificate:
    """Forward-Euler error ``E_l`` for ``K`` steps of ``tau = T/K``.

    ``M`` defaults to :func:`estimate_M` on the reference trajectory.  The
    certificate is ``guaranteed`` only when ``K`` meets
    :func:`min_steps_condition` for that ``M``; otherwise it is advisory
    but still reports whether the envelope held.
    """
    if K < 1:
        raise PreconditionError("K must be positive")
    u0 = problem._check(u0)
    tau = T / K
    ref = reference_flow(problem, u0, T, tau, ode_refinement, tol, method)
    M = estimate_M(ref, problem) if M is None else M
    spec = problem.spec
    K_req, binding = min_steps_condition(T, spec.mu, M, spec.delta, spec.alpha, spec.beta)
    _, _, _, _, _, euler = kernels.descent(problem.Q, problem.c, problem.weight, problem.alpha,
                                           u0, tau, K, grad_floor=-1.0, record=False,
                                           record_iterates=True)
    E = np.linalg.norm(euler - ref.states, axis=1)
    beta_bar = spec.beta * M**spec.alpha
    C_E = beta_bar / spec.mu
    bound = C_E * tau**spec.alpha
    passed = bool(np.max(E) <= bound * (1.0 + 1e-9))
    return ErrorCertificate(tau=tau, K=K, E=E, bound=bound, C_E=C_E, M=M, beta_bar=beta_bar,
                            passed=passed, binding_constraint=binding, K_required=K_req,
                            guaranteed=K >= K_req, euler_states=euler, reference=ref)
