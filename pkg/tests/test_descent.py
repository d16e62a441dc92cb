import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holder_descent import descent, flow, problems
from holder_descent.descent import StepsizePolicy
from holder_descent.errors import ConfigurationError, PreconditionError, RangeError


def test_scalar_fixed_step_history(scalar):
    rec = descent.run_gd(scalar, [-1.0], StepsizePolicy.fixed(0.5), max_iter=3)
    assert rec.dist.tolist() == [1.0, 0.5, 0.25, 0.125]
    assert rec.stop_reason == "max_iter" and rec.iterations == 3


def test_gd_step_scalar(scalar):
    assert descent.gd_step(scalar, [1.0], 0.25)[0] == 0.5


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 10_000), alpha=st.floats(0.1, 1.0))
def test_minimizer_is_fixed_point(n, seed, alpha):
    p = problems.make_composite_problem(n, alpha, seed)
    us = p.minimizer
    tau = 1.0 / p.spec.beta
    assert np.linalg.norm(descent.gd_step(p, us, tau) - us) <= 1e-12 * (1 + np.abs(us).max()) * (1 + p.spec.beta)


class TestClosedForms:
    def test_refined_stepsize_example(self):
        assert descent.refined_stepsize(1.0, 2.0, 0.5, 1e-2) == pytest.approx(0.0025, rel=1e-12)

    def test_refined_bound_example(self):
        bound = descent.refined_iteration_bound(1.0, 2.0, 0.5, 1e-2, 1.0)
        assert bound == math.ceil(8.0 * math.log(100.0) * 100.0)

    def test_corollary_forms(self):
        mu, beta, M, a, eps = 1.0, 2.0, 1.0, 0.5, 0.1
        tau = descent.corollary_stepsize(mu, beta, M, a, eps)
        assert tau == pytest.approx(2 ** -2 * 2.0 ** -2 * eps**2, rel=1e-12)
        bound = descent.corollary_iteration_bound(mu, beta, M, a, eps, 1.0)
        assert bound == flow.ceil_int(4.0 * 4.0 * math.log(20.0) / eps**2)

    def test_corollary_consistency(self):
        # bound ~ T*/tau with T* from the exit-time bound at eta = eps/2
        mu, beta, M, a, eps, d0 = 1.3, 3.1, 2.2, 0.4, 0.05, 1.0
        tau = descent.corollary_stepsize(mu, beta, M, a, eps)
        T = flow.t_star_upper_bound(mu, d0, eps / 2)
        bound = descent.corollary_iteration_bound(mu, beta, M, a, eps, d0)
        assert bound == flow.ceil_int(T / tau)

    def test_t_star_and_k_u_agree_with_corollary(self):
        mu, beta, M, a, eps, d0 = 1.0, 2.0, 1.5, 0.5, 0.1, 1.0
        eta = eps / 2
        T = flow.t_star_upper_bound(mu, d0, eta)
        assert flow.k_u(eta, mu, beta, M, T, a) == descent.corollary_iteration_bound(mu, beta, M, a, eps, d0)

    def test_underflow_is_range_error(self):
        with pytest.raises(RangeError):
            descent.corollary_stepsize(1.0, 1e10, 1.0, 0.01, 1e-10)

    def test_inputs_validated(self):
        with pytest.raises(PreconditionError):
            descent.refined_stepsize(1.0, 2.0, 0.0, 0.1)
        with pytest.raises(PreconditionError):
            descent.refined_iteration_bound(1.0, 2.0, 0.5, -0.1, 1.0)

    def test_small_d0_gives_one(self):
        assert descent.refined_iteration_bound(1.0, 2.0, 0.5, 0.5, 0.1) == 1

    @settings(max_examples=80, deadline=None)
    @given(mu=st.floats(0.1, 10.0), ratio=st.floats(1.0, 50.0), alpha=st.floats(0.05, 1.0),
           eps=st.floats(1e-6, 1.0))
    def test_contraction_factor_range(self, mu, ratio, alpha, eps):
        q = descent.contraction_factor(mu, mu * ratio, alpha, eps)
        assert 0.0 <= q < 1.0

    def test_contraction_factor_zero_allowed(self):
        assert descent.contraction_factor(1.0, 1.0, 1.0, 0.3) == 0.0

    def test_contraction_factor_negative_raises(self):
        with pytest.raises(RangeError):
            descent.contraction_factor(1.0, 1.0, 0.5, 4.0)

    def test_stagnation_prediction(self):
        assert descent.predict_stagnation_level(1.0, 2.0, 0.5, 0.01) == pytest.approx(0.02)
        assert descent.predict_stagnation_level(1.0, 2.0, 1.0, 0.01) is None


class TestRefinedRun:
    def test_reaches_target_within_bound(self):
        p = problems.make_composite_problem(5, 0.5, 0)
        u0 = p.minimizer + 0.5 * np.ones(5) / math.sqrt(5)
        rec = descent.run_gd(p, u0, StepsizePolicy.refined(0.1), max_iter=10**6)
        assert rec.stop_reason == "target_reached" and rec.in_hypothesis
        assert rec.iterations <= rec.bound
        assert rec.final_dist <= 0.1

    def test_contraction_per_step(self):
        p = problems.make_composite_problem(5, 0.5, 2)
        u0 = p.minimizer + 0.8 * np.ones(5) / math.sqrt(5)
        eps = 0.05
        rec = descent.run_gd(p, u0, StepsizePolicy.refined(eps), max_iter=10**6)
        q = descent.contraction_factor(p.spec.mu, p.spec.beta, 0.5, eps)
        d2 = rec.dist**2
        assert np.all(d2[1:] <= q * d2[:-1] * (1 + 1e-9))

    def test_out_of_hypothesis_noted(self, composite5):
        p = composite5
        u0 = p.minimizer + 5.0
        rec = descent.run_gd(p, u0, StepsizePolicy.refined(0.5), max_iter=100)
        assert rec.in_hypothesis is False and rec.notes


class TestRunner:
    def test_divergence(self, composite5):
        p = composite5
        rec = descent.run_gd(p, p.initial_point, StepsizePolicy.fixed(5.0 / p.spec.beta), max_iter=10_000)
        assert rec.stop_reason == "diverged" and rec.iterations < 10_000

    def test_grad_floor_stop(self):
        p = problems.make_scalar_example(1.0)
        rec = descent.run_gd(p, [0.0], StepsizePolicy.fixed(0.1), max_iter=10)
        assert rec.stop_reason == "target_reached" and rec.iterations == 0

    def test_no_minimizer_uses_gradient_target(self):
        p = problems.make_poisson_plus(3, 1.0)
        rec = descent.run_gd(p, np.ones(p.n), StepsizePolicy.fixed(1.0 / p.spec.beta),
                             max_iter=10**5, epsilon=1e-6)
        assert rec.stop_reason == "target_reached"
        assert rec.grad_norm[-1] <= p.spec.mu * 1e-6
        assert np.all(np.isnan(rec.dist))

    def test_corollary_without_M_warns(self, composite5, caplog):
        p = composite5
        with caplog.at_level("WARNING"):
            tau = descent.resolve_stepsize(p, StepsizePolicy.corollary(0.5), p.initial_point)
        M = np.linalg.norm(p.grad(p.initial_point)) * 1.05
        assert tau == pytest.approx(descent.corollary_stepsize(p.spec.mu, p.spec.beta, M, 0.5, 0.5))
        assert "corollary" in caplog.text

    def test_corollary_without_anything(self, composite5):
        with pytest.raises(ConfigurationError):
            descent.resolve_stepsize(composite5, StepsizePolicy.corollary(0.5))

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            StepsizePolicy.fixed(-1.0)
        with pytest.raises(ValueError):
            StepsizePolicy.refined(0.0)

    def test_iterations_to_target_matches_run_gd(self, composite5):
        p = composite5
        tau = 0.01
        rec = descent.run_gd(p, p.initial_point, StepsizePolicy.fixed(tau), max_iter=50_000, epsilon=1e-3)
        k, reason, u = descent.iterations_to_target(p, p.initial_point, tau, 1e-3, 50_000)
        assert (k, reason) == (rec.iterations, rec.stop_reason)
        assert np.array_equal(u, rec.final_point)

    def test_iterations_to_target_needs_minimizer(self):
        p = problems.make_poisson_plus(2, 1.0)
        with pytest.raises(ConfigurationError):
            descent.iterations_to_target(p, np.zeros(4), 0.01, 1e-3, 10)

    def test_runs_are_reproducible(self, composite5):
        p = composite5
        a = descent.run_gd(p, p.initial_point, StepsizePolicy.fixed(0.01), max_iter=500)
        b = descent.run_gd(p, p.initial_point, StepsizePolicy.fixed(0.01), max_iter=500)
        assert np.array_equal(a.dist, b.dist) and np.array_equal(a.final_point, b.final_point)


class TestStagnation:
    def test_geometric_decay_has_no_plateau(self):
        assert descent.detect_stagnation(0.9 ** np.arange(1000)) is None

    def test_flat_tail_detected(self):
        x = np.concatenate([2.0 ** -np.arange(20.0), np.full(200, 1e-6)])
        level, onset = descent.detect_stagnation(x, window=100, rel_tol=1e-2)
        assert level == pytest.approx(1e-6) and onset == 20

    def test_short_history(self):
        assert descent.detect_stagnation(np.ones(10), window=100) is None

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            descent.detect_stagnation(np.empty(0))
        with pytest.raises(ValueError):
            descent.detect_stagnation(np.ones(5), window=1)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(1e-6, 1e3), min_size=5, max_size=300), st.integers(2, 20))
    def test_window_extremes_match_brute_force(self, xs, w):
        x = np.asarray(xs)
        if x.size < w:
            return
        hi = descent._window_extreme(x, w, np.maximum)
        lo = descent._window_extreme(x, w, np.minimum)
        brute_hi = np.array([x[i:i + w].max() for i in range(x.size - w + 1)])
        brute_lo = np.array([x[i:i + w].min() for i in range(x.size - w + 1)])
        assert np.array_equal(hi, brute_hi) and np.array_equal(lo, brute_lo)
