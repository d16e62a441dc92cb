"""Fixed-stepsize gradient descent, stepsize rules and iteration bounds."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from . import kernels
from .errors import ConfigurationError, NumericError, PreconditionError, RangeError
from .flow import M_SAFETY, ceil_int, min_steps_condition

log = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 1e6
POLICY_KINDS = ("fixed", "corollary", "refined")


@dataclass(frozen=True)
class StepsizePolicy:
    kind: str
    tau: Optional[float] = None
    epsilon: Optional[float] = None
    M: Optional[float] = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ConfigurationError(f"unknown policy kind {self.kind!r}")
        if self.kind == "fixed" and not (self.tau is not None and self.tau >= 0.0):
            raise ConfigurationError("fixed policy needs tau >= 0")
        if self.kind in ("corollary", "refined") and not (self.epsilon is not None and self.epsilon > 0):
            raise ConfigurationError(f"{self.kind} policy needs a positive epsilon")

    @classmethod
    def fixed(cls, tau: float) -> "StepsizePolicy":
        return cls("fixed", tau=tau)

    @classmethod
    def corollary(cls, epsilon: float, M: Optional[float] = None) -> "StepsizePolicy":
        return cls("corollary", epsilon=epsilon, M=M)

    @classmethod
    def refined(cls, epsilon: float) -> "StepsizePolicy":
        return cls("refined", epsilon=epsilon)

    def describe(self) -> str:
        parts = [self.kind]
        for name in ("tau", "epsilon", "M"):
            value = getattr(self, name)
            if value is not None:
                parts.append(f"{name}={format(value, '.17g')}")
        return " ".join(parts)


@dataclass(frozen=True, eq=False)
class RunRecord:
    policy: StepsizePolicy
    tau_used: float
    iterations: int
    dist: np.ndarray
    grad_norm: np.ndarray
    stop_reason: str
    final_point: np.ndarray
    problem_label: str = ""
    seed: Optional[int] = None
    label: str = ""
    epsilon: Optional[float] = None
    bound: Optional[int] = None
    in_hypothesis: Optional[bool] = None
    notes: tuple = ()
    iterates: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def final_dist(self) -> float:
        return float(self.dist[-1])


def gd_step(problem, u, tau: float) -> np.ndarray:
    """``u - tau * grad f(u)``; the same arithmetic as the descent kernel."""
    u = problem._check(u)
    g = problem.grad(u)
    if not np.all(np.isfinite(g)):
        raise NumericError("gradient is not finite")
    return u - tau * g


# ---------------------------------------------------------------------------
# closed-form stepsizes and bounds

def _positive(**values):
    for name, value in values.items():
        if not value > 0:
            raise PreconditionError(f"{name} must be positive, got {value!r}")


def _alpha_ok(alpha):
    if not 0.0 < alpha <= 1.0:
        raise PreconditionError(f"alpha must lie in (0, 1], got {alpha!r}")


def corollary_stepsize(mu, beta, M, alpha, epsilon) -> float:
    """``2^(-1/a) mu^(1/a) beta^(-1/a) M^(-1) eps^(1/a)``."""
    _positive(mu=mu, beta=beta, M=M, epsilon=epsilon)
    _alpha_ok(alpha)
    q = 1.0 / alpha
    with np.errstate(under="ignore", over="ignore"):
        tau = float(np.float64(0.5 * mu * epsilon / beta) ** q / M)
    if not (tau > 0.0 and math.isfinite(tau)):
        raise RangeError(f"corollary stepsize is not representable ({tau!r})")
    return tau


def corollary_iteration_bound(mu, beta, M, alpha, epsilon, d0) -> int:
    """``ceil(2^(1/a) mu^(-1-1/a) beta^(1/a) M log(2 d0/eps) eps^(-1/a))``, at least 1."""
    _positive(mu=mu, beta=beta, M=M, epsilon=epsilon, d0=d0)
    _alpha_ok(alpha)
    q = 1.0 / alpha
    logterm = math.log(2.0 * d0 / epsilon)
    if logterm <= 0.0:
        return 1
    with np.errstate(over="ignore"):
        value = float(np.float64(2.0 * beta / (mu * epsilon)) ** q / mu * M * logterm)
    if not math.isfinite(value):
        raise RangeError("corollary iteration bound overflowed")
    return max(1, ceil_int(value))


def refined_stepsize(mu, beta, alpha, epsilon) -> float:
    """``mu beta^(-2) eps^(2-2a)``."""
    _positive(mu=mu, beta=beta, epsilon=epsilon)
    _alpha_ok(alpha)
    return mu / beta**2 * epsilon ** (2.0 - 2.0 * alpha)


def refined_iteration_bound(mu, beta, alpha, epsilon, d0) -> int:
    """``ceil(2 beta^2/mu^2 log(d0/eps) eps^(2a-2))``, at least 1."""
    _positive(mu=mu, beta=beta, epsilon=epsilon, d0=d0)
    _alpha_ok(alpha)
    logterm = math.log(d0 / epsilon)
    if logterm <= 0.0:
        return 1
    with np.errstate(over="ignore"):
        value = float(2.0 * beta**2 / mu**2 * logterm * np.float64(epsilon) ** (2.0 * alpha - 2.0))
    if not math.isfinite(value):
        raise RangeError("refined iteration bound overflowed")
    return max(1, ceil_int(value))


def contraction_factor(mu, beta, alpha, epsilon) -> float:
    """Squared-distance factor ``1 - mu^2 beta^(-2) eps^(2-2a)`` per refined step.

    Zero is allowed (``alpha = 1``, ``mu = beta``); negative values raise.
    """
    _positive(mu=mu, beta=beta, epsilon=epsilon)
    _alpha_ok(alpha)
    factor = 1.0 - mu**2 / beta**2 * epsilon ** (2.0 - 2.0 * alpha)
    if factor < 0.0:
        raise RangeError(f"contraction factor {factor:g} is negative; epsilon too large")
    return factor


def predict_stagnation_level(mu, beta, alpha, tau) -> Optional[float]:
    """Distance ``(beta^2 tau / (2 mu))^(1/(2-2a))`` where the two tau terms balance.

    Returns None for ``alpha = 1``.
    """
    _positive(mu=mu, beta=beta, tau=tau)
    _alpha_ok(alpha)
    if alpha == 1.0:
        return None
    return (beta**2 * tau / (2.0 * mu)) ** (1.0 / (2.0 - 2.0 * alpha))


def detect_stagnation(record, window: int = 100, rel_tol: float = 1e-2):
    """First index where ``dist`` stays within ``rel_tol`` (relative) for ``window`` entries.

    Accepts a :class:`RunRecord` or a bare distance array.  Returns
    ``(plateau_level, onset)`` with the level being the window mean, or
    None when no such window exists.
    """
    dist = np.asarray(record.dist if isinstance(record, RunRecord) else record, dtype=np.float64)
    if dist.size == 0:
        raise ValueError("empty distance history")
    if window < 2:
        raise ValueError("window must be at least 2")
    if dist.size < window:
        return None
    hi = _window_extreme(dist, window, np.maximum)
    lo = _window_extreme(dist, window, np.minimum)
    flat = (hi - lo) <= rel_tol * hi
    hits = np.flatnonzero(flat)
    if hits.size == 0:
        return None
    onset = int(hits[0])
    return float(np.mean(dist[onset:onset + window])), onset


def _window_extreme(x, window, op):
    """``op`` over ``x[i:i+window]`` for every full window start ``i``."""
    filt = maximum_filter1d if op is np.maximum else minimum_filter1d
    centred = filt(x, size=window, mode="nearest")
    # size-w filter centred at i + w//2 covers x[i : i + w]
    return centred[window // 2: window // 2 + x.size - window + 1]


# ---------------------------------------------------------------------------
# runner

def resolve_stepsize(problem, policy: StepsizePolicy, u0=None) -> float:
    spec = problem.spec
    if policy.kind == "fixed":
        return float(policy.tau)
    if policy.kind == "refined":
        return refined_stepsize(spec.mu, spec.beta, spec.alpha, policy.epsilon)
    M = policy.M
    if M is None:
        if u0 is None:
            raise ConfigurationError("corollary policy needs M or an initial point")
        M = float(np.linalg.norm(problem.grad(u0))) * M_SAFETY
        log.warning("corollary policy without M; using ||grad f(u0)|| * %.2f = %.6g", M_SAFETY, M)
        if not M > 0.0:
            raise ConfigurationError("cannot derive M: gradient vanishes at u0")
    return corollary_stepsize(spec.mu, spec.beta, M, spec.alpha, policy.epsilon)


def _bound_for(problem, policy, tau, epsilon, d0, u0):
    """Theoretical iteration bound, hypothesis flag and notes for a policy."""
    spec = problem.spec
    if epsilon is None or d0 is None or policy.kind == "fixed":
        return None, None, ()
    if policy.kind == "refined":
        bound = refined_iteration_bound(spec.mu, spec.beta, spec.alpha, epsilon, max(d0, epsilon))
        inside = d0 <= spec.delta
        notes = () if inside else ("out of hypothesis: ||u0 - u*|| > delta",)
        return bound, inside, notes
    M = policy.M if policy.M is not None else float(np.linalg.norm(problem.grad(u0))) * M_SAFETY
    bound = corollary_iteration_bound(spec.mu, spec.beta, M, spec.alpha, epsilon, max(d0, epsilon / 2))
    T = bound * tau
    K_req, binding = min_steps_condition(T, spec.mu, M, spec.delta, spec.alpha, spec.beta)
    notes = ()
    if K_req > bound:
        notes = (f"corollary bound {bound} is below the step-condition minimum {K_req} ({binding})",)
    return bound, K_req <= bound, notes


def run_gd(problem, u0, policy: StepsizePolicy, max_iter: int = 10_000,
           epsilon: Optional[float] = None, grad_floor: float = 0.0,
           record_iterates: bool = False, seed: Optional[int] = None, label: str = "",
           chunk: int = kernels.DEFAULT_CHUNK) -> RunRecord:
    """Iterate ``u_{k+1} = u_k - tau grad f(u_k)`` from ``u0``.

    Stops at the first of: ``||u_k - u*|| <= epsilon`` (or
    ``||grad f(u_k)|| <= mu epsilon`` when ``u*`` is unknown), gradient
    norm at or below ``grad_floor``, divergence past
    ``1e6 (1 + ||u0 - u*||)``, or ``max_iter`` steps.  ``epsilon``
    defaults to the policy's target.
    """
    u0 = problem._check(u0)
    if max_iter < 0:
        raise ValueError("max_iter must be nonnegative")
    tau = resolve_stepsize(problem, policy, u0)
    if epsilon is None:
        epsilon = policy.epsilon
    spec = problem.spec
    star = spec.minimizer
    d0 = float(np.linalg.norm(u0 - star)) if star is not None else float(np.linalg.norm(u0))
    eps_dist = epsilon if (epsilon is not None and star is not None) else -1.0
    eps_grad = spec.mu * epsilon if (epsilon is not None and star is None) else -1.0
    k, code, u, dist, gnorm, iterates = kernels.descent(
        problem.Q, problem.c, problem.weight, problem.alpha, u0, tau, max_iter,
        u_star=star, eps_dist=eps_dist, eps_grad=eps_grad, grad_floor=grad_floor,
        div_limit=DIVERGENCE_FACTOR * (1.0 + d0), record=True,
        record_iterates=record_iterates, chunk=chunk)
    bound, inside, notes = _bound_for(problem, policy, tau, epsilon, d0 if star is not None else None, u0)
    return RunRecord(policy=policy, tau_used=tau, iterations=k, dist=dist, grad_norm=gnorm,
                     stop_reason=kernels.STOP_NAMES[code], final_point=u, problem_label=problem.label,
                     seed=seed, label=label, epsilon=epsilon, bound=bound, in_hypothesis=inside,
                     notes=notes, iterates=iterates if record_iterates else None)


def iterations_to_target(problem, u0, tau: float, epsilon: float, max_iter: int):
    """Count iterations until ``||u_k - u*|| <= epsilon`` without storing history.

    Returns ``(iterations, stop_reason, final_point)``.
    """
    u0 = problem._check(u0)
    star = problem.spec.minimizer
    if star is None:
        raise ConfigurationError("iterations_to_target needs a planted minimizer")
    d0 = float(np.linalg.norm(u0 - star))
    k, code, u, _, _, _ = kernels.descent(
        problem.Q, problem.c, problem.weight, problem.alpha, u0, tau, max_iter,
        u_star=star, eps_dist=epsilon, div_limit=DIVERGENCE_FACTOR * (1.0 + d0), record=False)
    return k, kernels.STOP_NAMES[code], u
