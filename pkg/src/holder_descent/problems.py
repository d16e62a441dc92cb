"""Strongly convex test problems with locally Hoelder-continuous gradients.

Three families share the semilinear form handled by
:mod:`holder_descent.kernels`:

* :class:`CompositeQuadraticProblem` -- ``1/2 u'Au + 1/(1+a) e'u_+^(1+a) - c'u``
  with a random SPD ``A`` and a planted minimizer,
* :class:`ScalarExampleProblem` -- ``lam/2 u^2 + 2/3 u_+^(3/2)``,
* :class:`PoissonPlusProblem` -- the five-point discretisation of
  ``-lap(u) + nu sqrt(u_+) = 0`` on the unit square with ``u = 1`` on the
  boundary.

Random draws come from numpy's Philox4x64 counter-based bit generator
seeded with the integer seed; normals use numpy's ziggurat
``Generator.standard_normal``.  The draw order for a composite problem is
``u0``, ``u_star``, then the ``n x n`` factor ``R`` of ``A = R'R + I``
(row-major), following the MATLAB listing it reproduces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import PreconditionError

_DIGITS = ".17g"


def rng_from_seed(seed: int) -> np.random.Generator:
    """Philox4x64 generator for ``seed``; the only RNG constructor used here."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Constants of a test problem: dimension, mu, alpha, beta, delta."""

    n: int
    mu: float
    alpha: float
    beta: float
    delta: float
    minimizer: Optional[np.ndarray] = None
    label: str = ""

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        for name in ("mu", "beta", "delta"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.minimizer is not None and np.shape(self.minimizer) != (self.n,):
            raise ValueError("minimizer has the wrong length")


@dataclass(frozen=True, eq=False)
class SemilinearProblem:
    """``f(u) = 1/2 u'Qu + w/(1+alpha) e'u_+^(1+alpha) - c'u``.

    Subclasses only add construction metadata; evaluation is shared.
    """

    Q: object
    c: np.ndarray
    weight: float
    alpha: float
    spec: ProblemSpec

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def minimizer(self) -> Optional[np.ndarray]:
        return self.spec.minimizer

    @property
    def label(self) -> str:
        return self.spec.label

    def _check(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (self.n,):
            raise ValueError(f"expected a vector of length {self.n}, got shape {u.shape}")
        return u

    def value(self, u) -> float:
        u = self._check(u)
        quad = 0.5 * float(u @ (self.Q @ u))
        hold = self.weight / (1.0 + self.alpha) * float(np.sum(np.maximum(u, 0.0) ** (1.0 + self.alpha)))
        return quad + hold - float(self.c @ u)

    def grad(self, u) -> np.ndarray:
        u = self._check(u)
        return kernels.gradient(self.Q, self.c, self.weight, self.alpha, u)

    def grads(self, U) -> np.ndarray:
        """Row-wise gradients for a batch ``U`` of shape ``(m, n)`` (numpy only)."""
        U = np.atleast_2d(np.asarray(U, dtype=np.float64))
        QU = np.asarray((self.Q @ U.T).T)
        return QU + self.weight * np.maximum(U, 0.0) ** self.alpha - self.c

    def values(self, U) -> np.ndarray:
        U = np.atleast_2d(np.asarray(U, dtype=np.float64))
        QU = np.asarray((self.Q @ U.T).T)
        hold = np.sum(np.maximum(U, 0.0) ** (1.0 + self.alpha), axis=1)
        return 0.5 * np.sum(U * QU, axis=1) + self.weight / (1.0 + self.alpha) * hold - U @ self.c

    def parameters(self) -> dict:
        return {}

    def describe(self) -> str:
        return describe_problem(self)


@dataclass(frozen=True, eq=False)
class CompositeQuadraticProblem(SemilinearProblem):
    seed: int = 0
    initial_point: Optional[np.ndarray] = None

    @property
    def A(self) -> np.ndarray:
        return self.Q

    def parameters(self) -> dict:
        return {"kind": "composite", "n": self.n, "alpha": self.alpha, "seed": self.seed}


@dataclass(frozen=True, eq=False)
class ScalarExampleProblem(SemilinearProblem):
    lam: float = 1.0

    def parameters(self) -> dict:
        return {"kind": "scalar", "lambda": self.lam}


@dataclass(frozen=True, eq=False)
class PoissonPlusProblem(SemilinearProblem):
    m: int = 2
    nu: float = 1.0
    h: float = field(default=0.0)

    @property
    def L(self):
        return self.Q

    @property
    def b(self) -> np.ndarray:
        return self.c

    def parameters(self) -> dict:
        return {"kind": "poisson", "m": self.m, "nu": self.nu}


# ---------------------------------------------------------------------------
# constructors

def _spd_from_rng(rng: np.random.Generator, n: int) -> np.ndarray:
    R = rng.standard_normal((n, n))
    A = R.T @ R
    # R'R is symmetric in exact arithmetic; force the stored copy to be too
    A = np.triu(A) + np.triu(A, 1).T
    A[np.diag_indices(n)] += 1.0
    return A


def make_random_spd(n: int, seed: int) -> np.ndarray:
    """``R'R + I`` with ``R`` standard normal from the seeded generator."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    return _spd_from_rng(rng_from_seed(seed), n)


def make_composite_problem(n: int, alpha: float, seed: int) -> CompositeQuadraticProblem:
    """Planted composite problem of dimension ``n``.

    ``c = A u* + (u*)_+^alpha`` so that ``grad f(u*) = 0``.  The constants
    are ``mu = lambda_min(A)``, ``beta = 1 + lambda_max(A)``, ``delta = 1``.
    ``alpha = 1`` is accepted for Lipschitz control runs.
    """
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    rng = rng_from_seed(seed)
    u0 = rng.standard_normal(n)
    u_star = rng.standard_normal(n)
    A = _spd_from_rng(rng, n)
    c = A @ u_star + np.maximum(u_star, 0.0) ** alpha
    eig = np.linalg.eigvalsh(A)
    spec = ProblemSpec(n=n, mu=float(eig[0]), alpha=float(alpha), beta=1.0 + float(eig[-1]),
                       delta=1.0, minimizer=u_star,
                       label=f"composite(n={n},alpha={alpha:g},seed={seed})")
    return CompositeQuadraticProblem(Q=A, c=c, weight=1.0, alpha=float(alpha), spec=spec,
                                     seed=int(seed), initial_point=u0)


def make_scalar_example(lam: float = 1.0) -> ScalarExampleProblem:
    """One-dimensional example with ``f'(u) = lam*u + sqrt(u_+)``."""
    if not lam > 0.0:
        raise ValueError(f"lambda must be positive, got {lam}")
    spec = ProblemSpec(n=1, mu=float(lam), alpha=0.5, beta=1.0 + lam, delta=1.0,
                       minimizer=np.zeros(1), label=f"scalar(lambda={lam:g})")
    return ScalarExampleProblem(Q=np.array([[float(lam)]]), c=np.zeros(1), weight=1.0,
                                alpha=0.5, spec=spec, lam=float(lam))


def laplacian_2d(m: int) -> sp.csr_matrix:
    """Five-point ``-lap`` on an ``m x m`` interior grid, zero Dirichlet, scaled by 1/h^2."""
    h = 1.0 / (m + 1)
    one = np.ones(m)
    T = sp.diags([-one[:-1], 2.0 * one, -one[:-1]], [-1, 0, 1], format="csr")
    I = sp.identity(m, format="csr")
    L = (sp.kron(I, T) + sp.kron(T, I)) / h**2
    return sp.csr_matrix(L)


def make_poisson_plus(m: int, nu: float = 1.0) -> PoissonPlusProblem:
    """Discrete ``-lap(u) + nu*sqrt(u_+) = 0`` with ``u = 1`` on the boundary.

    Unknowns are ordered row-major, ``index = i*m + j``.  Each interior
    node next to ``k`` boundary nodes gets ``k/h^2`` in ``b``.  Extreme
    eigenvalues of ``L`` are the closed forms ``8/h^2 sin^2(pi h/2)`` and
    ``8/h^2 cos^2(pi h/2)``.
    """
    if m < 2:
        raise ValueError(f"m must be at least 2, got {m}")
    if not nu > 0.0:
        raise ValueError(f"nu must be positive, got {nu}")
    h = 1.0 / (m + 1)
    L = laplacian_2d(m)
    edge = np.zeros(m)
    edge[0] += 1.0
    edge[-1] += 1.0
    touches = edge[:, None] + edge[None, :]
    b = touches.ravel() / h**2
    lam_min = 8.0 / h**2 * math.sin(math.pi * h / 2.0) ** 2
    lam_max = 8.0 / h**2 * math.cos(math.pi * h / 2.0) ** 2
    spec = ProblemSpec(n=m * m, mu=lam_min, alpha=0.5, beta=nu + lam_max, delta=1.0,
                       minimizer=None, label=f"poisson(m={m},nu={nu:g})")
    return PoissonPlusProblem(Q=L, c=b, weight=float(nu), alpha=0.5, spec=spec,
                              m=int(m), nu=float(nu), h=h)


# ---------------------------------------------------------------------------
# evaluation

def eval_f(problem: SemilinearProblem, u) -> float:
    return problem.value(u)


def eval_grad(problem: SemilinearProblem, u) -> np.ndarray:
    return problem.grad(u)


# ---------------------------------------------------------------------------
# certifiers

@dataclass
class HolderReport:
    alpha: float
    beta: float
    delta: float
    samples: int
    used: int
    max_ratio: float
    worst_pair: Optional[tuple]
    passed: bool


@dataclass
class ConvexityReport:
    mu: float
    samples: int
    worst_value_margin: float
    worst_monotone_margin: float
    failures: int
    passed: bool


def _sample_ball(rng, count, n, center, radius):
    d = rng.standard_normal((count, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = radius * rng.random(count) ** (1.0 / n)
    return center + r[:, None] * d


def _center(problem):
    m = problem.minimizer
    return np.zeros(problem.n) if m is None else np.asarray(m, dtype=np.float64)


def holder_ratio(problem: SemilinearProblem, u, v, alpha: float) -> float:
    """``||grad f(u) - grad f(v)|| / ||u - v||^alpha`` (nan for ``u == v``)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    dist = float(np.linalg.norm(u - v))
    if dist == 0.0:
        return math.nan
    g = problem.grads(np.vstack([u, v]))
    return float(np.linalg.norm(g[0] - g[1])) / dist**alpha


def certify_holder(problem: SemilinearProblem, alpha: float, beta: float, delta: float,
                   samples: int = 10_000, seed: int = 0, radius: float = 2.0,
                   pairs=None) -> HolderReport:
    """Empirical local Hoelder certificate.

    Draws ``u`` uniformly in the ball of ``radius`` around the minimizer
    (origin when unknown) and ``v = u + r d`` with ``r`` uniform in
    ``(0, delta]`` and ``d`` uniform on the sphere.  Extra ``(u, v)`` pairs
    can be appended through ``pairs``; zero-distance pairs are skipped.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    rng = rng_from_seed(seed)
    n = problem.n
    U = _sample_ball(rng, samples, n, _center(problem), radius)
    d = rng.standard_normal((samples, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = delta * (1.0 - rng.random(samples))
    V = U + r[:, None] * d
    if pairs:
        extra = np.asarray(pairs, dtype=np.float64).reshape(-1, 2, n)
        U = np.vstack([U, extra[:, 0]])
        V = np.vstack([V, extra[:, 1]])
    dist = np.linalg.norm(U - V, axis=1)
    keep = (dist > 0.0) & (dist <= delta * (1.0 + 1e-12))
    num = np.linalg.norm(problem.grads(U[keep]) - problem.grads(V[keep]), axis=1)
    ratios = num / dist[keep] ** alpha
    if ratios.size == 0:
        return HolderReport(alpha, beta, delta, samples, 0, 0.0, None, True)
    worst = int(np.argmax(ratios))
    idx = np.flatnonzero(keep)[worst]
    max_ratio = float(ratios[worst])
    return HolderReport(alpha, beta, delta, samples, int(ratios.size), max_ratio,
                        (U[idx].copy(), V[idx].copy()), max_ratio <= beta * (1.0 + 1e-9))


def certify_strong_convexity(problem: SemilinearProblem, mu: float, samples: int = 10_000,
                             seed: int = 0, radius: float = 2.0, pairs=None) -> ConvexityReport:
    """Sampled check of both strong-convexity inequalities with modulus ``mu``.

    Margins are ``lhs - rhs``; a margin above ``-1e-9 * scale`` counts as a
    pass, where ``scale`` is the magnitude of the terms being compared.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    rng = rng_from_seed(seed)
    n = problem.n
    center = _center(problem)
    U = _sample_ball(rng, samples, n, center, radius)
    V = _sample_ball(rng, samples, n, center, radius)
    if pairs:
        extra = np.asarray(pairs, dtype=np.float64).reshape(-1, 2, n)
        U = np.vstack([U, extra[:, 0]])
        V = np.vstack([V, extra[:, 1]])
    fu, fv = problem.values(U), problem.values(V)
    gu, gv = problem.grads(U), problem.grads(V)
    D = U - V
    sq = np.sum(D * D, axis=1)
    lin = np.sum(gv * D, axis=1)
    value_margin = (fu - fv) - lin - 0.5 * mu * sq
    value_scale = np.abs(fu) + np.abs(fv) + np.abs(lin) + 0.5 * mu * sq
    mono = np.sum((gu - gv) * D, axis=1)
    mono_margin = mono - mu * sq
    mono_scale = np.abs(mono) + mu * sq
    bad = (value_margin < -1e-9 * value_scale) | (mono_margin < -1e-9 * mono_scale)
    return ConvexityReport(mu, samples, float(np.min(value_margin)), float(np.min(mono_margin)),
                           int(np.count_nonzero(bad)), not bool(np.any(bad)))


def finite_diff_grad_check(problem: SemilinearProblem, u, h: float = 1e-6) -> float:
    """Max over components of ``|fd_i - g_i| / max(1, ||g||_inf)``.

    Central differences of the objective; every ``|u_i|`` must be at least
    ``10 h`` to keep the stencil off the kink of ``u_+^(1+alpha)``.
    """
    u = problem._check(u)
    if not h > 0.0:
        raise ValueError("h must be positive")
    bad = np.flatnonzero(np.abs(u) < 10.0 * h)
    if bad.size:
        i = int(bad[0])
        raise PreconditionError(f"component {i} has |u_i| = {abs(u[i]):g} < 10*h = {10 * h:g}")
    g = problem.grad(u)
    n = problem.n
    E = np.eye(n) * h
    fd = (problem.values(u + E) - problem.values(u - E)) / (2.0 * h)
    scale = max(1.0, float(np.max(np.abs(g))))
    return float(np.max(np.abs(fd - g)) / scale)


# ---------------------------------------------------------------------------
# text description

def _fmt(x) -> str:
    return format(float(x), _DIGITS)


def describe_problem(problem: SemilinearProblem) -> str:
    """``key = value`` lines sufficient to rebuild the problem."""
    spec = problem.spec
    lines = [f"label = {spec.label}"]
    for key, val in problem.parameters().items():
        lines.append(f"{key} = {_fmt(val) if isinstance(val, float) else val}")
    lines += [f"dimension = {spec.n}", f"mu = {_fmt(spec.mu)}", f"alpha = {_fmt(spec.alpha)}",
              f"beta = {_fmt(spec.beta)}", f"delta = {_fmt(spec.delta)}"]
    if spec.minimizer is not None:
        lines.append("minimizer = " + ", ".join(_fmt(x) for x in spec.minimizer))
    return "\n".join(lines) + "\n"


def load_problem(text: str) -> SemilinearProblem:
    """Rebuild a problem from :func:`describe_problem` output.

    A stored minimizer is compared against the regenerated one; a mismatch
    means the generator stream changed and raises ``ValueError``.
    """
    items = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        items[key.strip()] = val.strip()
    kind = items.get("kind")
    if kind == "composite":
        problem = make_composite_problem(int(items["n"]), float(items["alpha"]), int(items["seed"]))
    elif kind == "scalar":
        problem = make_scalar_example(float(items["lambda"]))
    elif kind == "poisson":
        problem = make_poisson_plus(int(items["m"]), float(items["nu"]))
    else:
        raise ValueError(f"unknown problem kind {kind!r}")
    if "minimizer" in items:
        stored = np.array([float(x) for x in items["minimizer"].split(",")])
        if not np.array_equal(stored, problem.minimizer):
            raise ValueError("stored minimizer does not match the regenerated problem")
    return problem
