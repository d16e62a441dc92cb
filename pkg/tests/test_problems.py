import math

import numpy as np
import pytest
import scipy.optimize
from hypothesis import given, settings
from hypothesis import strategies as st

from holder_descent import descent, problems
from holder_descent.errors import PreconditionError


def test_positive_part_vanishes_on_negative_input():
    spec = problems.ProblemSpec(n=1, mu=1.0, alpha=0.5, beta=2.0, delta=1.0)
    p = problems.CompositeQuadraticProblem(Q=np.eye(1), c=np.zeros(1), weight=1.0, alpha=0.5, spec=spec)
    assert p.value([-2.0]) == 2.0


def test_scalar_value_and_derivative(scalar):
    assert scalar.value([1.0]) == pytest.approx(7.0 / 6.0, rel=1e-15)
    assert problems.make_scalar_example(2.0).grad([1.0])[0] == 3.0
    assert scalar.grad([-1.0])[0] == -1.0
    assert scalar.grad([0.0])[0] == 0.0


@pytest.mark.parametrize("u", [-3.0, -0.2, 0.0, 1e-8, 0.3, 1.0, 7.5])
def test_scalar_derivative_formula(u):
    for lam in (0.5, 1.0, 3.0):
        p = problems.make_scalar_example(lam)
        assert p.grad([u])[0] == pytest.approx(lam * u + math.sqrt(max(u, 0.0)), rel=1e-15, abs=1e-300)


def test_dimension_mismatch(composite5):
    with pytest.raises(ValueError):
        composite5.value(np.zeros(4))
    with pytest.raises(ValueError):
        composite5.grad(np.zeros(6))


def test_planted_minimizer_is_local_minimum(composite5):
    us = composite5.minimizer
    f0 = composite5.value(us)
    for h in (1e-3, -1e-3):
        e = np.zeros(5)
        e[0] = h
        assert f0 <= composite5.value(us + e)


def test_random_spd():
    a = make = problems.make_random_spd
    one = make(1, 3)
    assert one.shape == (1, 1) and one[0, 0] >= 1.0
    A = make(5, 11)
    assert np.array_equal(A, A.T)
    assert np.min(np.linalg.eigvalsh(A)) >= 1.0 - 1e-12
    assert np.array_equal(make(5, 11), a(5, 11))
    assert not np.array_equal(make(5, 11), make(5, 12))


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 30), alpha=st.floats(0.05, 1.0), seed=st.integers(0, 2**31))
def test_stationarity_of_planted_problems(n, alpha, seed):
    p = problems.make_composite_problem(n, alpha, seed)
    assert np.linalg.norm(p.grad(p.minimizer)) <= 1e-10 * max(1.0, np.abs(p.c).max())
    assert p.spec.mu >= 1.0 - 1e-12
    assert p.spec.beta == pytest.approx(1.0 + np.linalg.eigvalsh(p.A)[-1])


def test_stationarity_tight_for_sweep_sizes():
    for n in (5, 20, 50):
        p = problems.make_composite_problem(n, 0.5, 0)
        assert np.linalg.norm(p.grad(p.minimizer)) <= 1e-10


def test_composite_constants_n50():
    p = problems.make_composite_problem(50, 0.5, 7)
    assert p.spec.mu >= 1.0
    eig = np.linalg.eigvalsh(p.A)
    assert p.spec.mu == eig[0] and p.spec.beta == 1.0 + eig[-1]
    assert p.spec.delta == 1.0


def test_sampled_strong_convexity_n3(rng):
    p = problems.make_composite_problem(3, 0.5, 4)
    us = p.minimizer
    for _ in range(100):
        v = rng.normal(size=3) * rng.uniform(0.01, 3.0)
        assert p.value(us + v) - p.value(us) >= 0.5 * p.spec.mu * v @ v - 1e-12


def test_generation_is_deterministic():
    a = problems.make_composite_problem(8, 0.3, 99)
    b = problems.make_composite_problem(8, 0.3, 99)
    for x, y in ((a.A, b.A), (a.c, b.c), (a.minimizer, b.minimizer), (a.initial_point, b.initial_point)):
        assert np.array_equal(x, y)


def test_alpha_only_changes_c():
    a = problems.make_composite_problem(6, 0.2, 5)
    b = problems.make_composite_problem(6, 0.8, 5)
    assert np.array_equal(a.A, b.A) and np.array_equal(a.minimizer, b.minimizer)
    assert not np.array_equal(a.c, b.c)


class TestPoisson:
    def test_m2_stencil_and_load(self):
        p = problems.make_poisson_plus(2, 1.0)
        h = 1.0 / 3.0
        L = p.L.toarray()
        expected = np.array([[4, -1, -1, 0], [-1, 4, 0, -1], [-1, 0, 4, -1], [0, -1, -1, 4]]) / h**2
        assert np.allclose(L, expected, rtol=1e-15)
        assert np.allclose(p.b, 2.0 / h**2, rtol=1e-15)

    @pytest.mark.parametrize("m", [2, 3, 5, 8])
    def test_symmetry_eigenvalues_and_boundary_load(self, m):
        p = problems.make_poisson_plus(m, 2.0)
        L = p.L.toarray()
        assert np.array_equal(L, L.T)
        eig = np.linalg.eigvalsh(L)
        assert p.spec.mu == pytest.approx(eig[0], rel=1e-12)
        assert p.spec.beta == pytest.approx(2.0 + eig[-1], rel=1e-12)
        grid = p.b.reshape(m, m)
        interior = np.zeros((m, m), bool)
        interior[1:-1, 1:-1] = True
        assert np.all(grid[interior] == 0.0) and np.all(grid[~interior] > 0.0)
        assert p.minimizer is None and p.spec.alpha == 0.5

    def test_m4_minimizer_by_long_descent(self):
        p = problems.make_poisson_plus(4, 1.0)
        tau = 1.0 / (p.spec.beta + 50.0)
        rec = descent.run_gd(p, np.ones(p.n), descent.StepsizePolicy.fixed(tau),
                             max_iter=200_000, grad_floor=1e-10)
        assert rec.grad_norm[-1] <= 1e-8
        # independent route: root of the gradient map
        sol = scipy.optimize.root(p.grad, np.ones(p.n), tol=1e-14)
        assert np.allclose(rec.final_point, sol.x, atol=1e-9)


class TestHolder:
    def test_example_passes(self, scalar):
        rep = problems.certify_holder(scalar, 0.5, 2.0, 1.0, samples=10_000, seed=3)
        assert rep.passed and rep.used == 10_000

    def test_equality_pair(self, scalar):
        assert problems.holder_ratio(scalar, [1.0], [0.0], 0.5) == pytest.approx(2.0, rel=1e-12)
        rep = problems.certify_holder(scalar, 0.5, 2.0, 1.0, samples=10, pairs=[[[1.0], [0.0]]])
        assert rep.max_ratio == pytest.approx(2.0, rel=1e-12) and rep.passed

    def test_zero_distance_pairs_skipped(self, scalar):
        assert math.isnan(problems.holder_ratio(scalar, [0.3], [0.3], 0.5))
        rep = problems.certify_holder(scalar, 0.5, 2.0, 1.0, samples=5, pairs=[[[0.3], [0.3]]])
        assert rep.used == 5

    def test_too_small_beta_fails(self, scalar):
        rep = problems.certify_holder(scalar, 0.5, 1.5, 1.0, samples=2000)
        assert not rep.passed and rep.max_ratio > 1.5


class TestStrongConvexity:
    def test_composite(self, composite5):
        assert problems.certify_strong_convexity(composite5, composite5.spec.mu, 1000, seed=1).passed

    def test_equal_points_pass(self, scalar):
        rep = problems.certify_strong_convexity(scalar, 1.0, samples=1, pairs=[[[0.4], [0.4]]])
        assert rep.passed

    def test_overstated_mu_fails_on_negative_half_line(self, scalar):
        # u, v < 0: f is lam/2 u^2 there, so the margin is (lam - mu)/2 (u-v)^2 < 0
        pairs = [[[-1.5], [-0.5]], [[-0.9], [-0.2]]]
        rep = problems.certify_strong_convexity(scalar, 2.0, samples=1, pairs=pairs)
        assert not rep.passed
        assert rep.worst_value_margin <= -0.5 * 1.0**2 + 1e-12


class TestFiniteDifferences:
    def test_scalar(self, scalar):
        assert problems.finite_diff_grad_check(scalar, [1.0], 1e-6) <= 1e-6

    def test_composite(self, composite5, rng):
        u = rng.normal(size=5)
        u = np.where(np.abs(u) < 0.1, 0.1 * np.sign(u + 1e-300), u)
        assert problems.finite_diff_grad_check(composite5, u, 1e-6) <= 1e-6

    def test_pure_quadratic_region(self):
        A = problems.make_random_spd(5, 2)
        spec = problems.ProblemSpec(n=5, mu=1.0, alpha=0.5, beta=1.0, delta=1.0)
        p = problems.CompositeQuadraticProblem(Q=A, c=np.zeros(5), weight=1.0, alpha=0.5, spec=spec)
        u = -np.linspace(0.2, 1.0, 5)
        assert problems.finite_diff_grad_check(p, u, 1e-4) <= 1e-9

    def test_precondition_names_component(self, composite5):
        u = np.ones(5)
        u[3] = 1e-7
        with pytest.raises(PreconditionError, match="component 3"):
            problems.finite_diff_grad_check(composite5, u, 1e-6)

    def test_poisson(self, rng):
        p = problems.make_poisson_plus(3, 1.5)
        assert problems.finite_diff_grad_check(p, rng.uniform(0.2, 1.0, p.n), 1e-6) <= 1e-5


class TestDescription:
    @pytest.mark.parametrize("make", [
        lambda: problems.make_composite_problem(7, 0.5, 3),
        lambda: problems.make_scalar_example(2.5),
        lambda: problems.make_poisson_plus(3, 0.7),
    ])
    def test_roundtrip(self, make):
        p = make()
        text = p.describe()
        q = problems.load_problem(text)
        assert q.describe() == text
        if p.minimizer is not None:
            assert np.array_equal(q.minimizer, p.minimizer)

    def test_minimizer_17_digits(self):
        p = problems.make_composite_problem(3, 0.5, 1)
        line = [ln for ln in p.describe().splitlines() if ln.startswith("minimizer")][0]
        values = [float(x) for x in line.split("=")[1].split(",")]
        assert np.array_equal(values, p.minimizer)

    def test_tampered_minimizer_rejected(self):
        text = problems.make_composite_problem(3, 0.5, 1).describe().replace("seed = 1", "seed = 2")
        with pytest.raises(ValueError):
            problems.load_problem(text)


def test_spec_validation():
    with pytest.raises(ValueError):
        problems.ProblemSpec(n=1, mu=1.0, alpha=1.5, beta=1.0, delta=1.0)
    with pytest.raises(ValueError):
        problems.ProblemSpec(n=1, mu=0.0, alpha=0.5, beta=1.0, delta=1.0)
