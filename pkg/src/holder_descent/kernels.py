"""Hot numeric kernels with a numba path and a pure-numpy path.

All test problems share the semilinear form

    f(u) = 1/2 u'Qu + w/(1+alpha) * sum(max(u, 0)**(1+alpha)) - c'u
    grad f(u) = Qu + w * max(u, 0)**alpha - c

with Q dense (composite, scalar) or CSR (five-point Laplacian).  The
kernels only see ``(Q, w, c, alpha)``; problem classes live in
:mod:`holder_descent.problems`.

Which path runs is decided by :data:`holder_descent._accel.JIT_ENABLED`.
Both paths are always importable so the benchmark can compare them.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from ._accel import JIT_ENABLED, njit

# stop codes shared by both descent paths
RUNNING, TARGET, MAX_ITER, DIVERGED = 0, 1, 2, 3
STOP_NAMES = {TARGET: "target_reached", MAX_ITER: "max_iter", DIVERGED: "diverged"}

EULER, RK4 = 0, 1
METHODS = {"euler": EULER, "rk4": RK4}

DEFAULT_CHUNK = 1 << 20


# ---------------------------------------------------------------------------
# numba kernels

@njit(nogil=True, cache=True)
def _grad_dense(op, c, w, alpha, u, out):
    A = op[0]
    n = u.shape[0]
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += A[i, j] * u[j]
        ui = u[i]
        if ui > 0.0:
            s += w * ui ** alpha
        out[i] = s - c[i]


@njit(nogil=True, cache=True)
def _grad_csr(op, c, w, alpha, u, out):
    data, indices, indptr = op
    n = u.shape[0]
    for i in range(n):
        s = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            s += data[p] * u[indices[p]]
        ui = u[i]
        if ui > 0.0:
            s += w * ui ** alpha
        out[i] = s - c[i]


def _make_descent_chunk(grad):
    @njit(nogil=True, cache=True)
    def chunk(op, c, w, alpha, u, tau, k_start, k_stop, max_iter,
              u_star, has_star, eps_dist, eps_grad, grad_floor, div_limit, u0,
              dist_out, gnorm_out, iter_out, record, record_iter):
        n = u.shape[0]
        g = np.empty(n)
        for k in range(k_start, k_stop):
            grad(op, c, w, alpha, u, g)
            gn = 0.0
            for i in range(n):
                gn += g[i] * g[i]
            gn = math.sqrt(gn)
            d = 0.0
            if has_star:
                for i in range(n):
                    d += (u[i] - u_star[i]) ** 2
            else:
                for i in range(n):
                    d += (u[i] - u0[i]) ** 2
            d = math.sqrt(d)
            j = k - k_start
            if record:
                dist_out[j] = d if has_star else np.nan
                gnorm_out[j] = gn
            if record_iter:
                for i in range(n):
                    iter_out[j, i] = u[i]
            if has_star and d <= eps_dist:
                return k, 1
            if (not has_star) and gn <= eps_grad:
                return k, 1
            if gn <= grad_floor:
                return k, 1
            if not (d <= div_limit and gn < np.inf):
                return k, 3
            if k >= max_iter:
                return k, 2
            for i in range(n):
                u[i] = u[i] - tau * g[i]
        return k_stop, 0

    return chunk


def _make_integrator(grad):
    @njit(nogil=True, cache=True)
    def integrate(op, c, w, alpha, u0, h, substeps, n_reports, method, out):
        n = u0.shape[0]
        u = u0.copy()
        k1 = np.empty(n)
        k2 = np.empty(n)
        k3 = np.empty(n)
        k4 = np.empty(n)
        tmp = np.empty(n)
        for i in range(n):
            out[0, i] = u[i]
        for r in range(n_reports):
            for _ in range(substeps):
                grad(op, c, w, alpha, u, k1)
                if method == 0:
                    for i in range(n):
                        u[i] = u[i] - h * k1[i]
                    continue
                for i in range(n):
                    tmp[i] = u[i] - 0.5 * h * k1[i]
                grad(op, c, w, alpha, tmp, k2)
                for i in range(n):
                    tmp[i] = u[i] - 0.5 * h * k2[i]
                grad(op, c, w, alpha, tmp, k3)
                for i in range(n):
                    tmp[i] = u[i] - h * k3[i]
                grad(op, c, w, alpha, tmp, k4)
                for i in range(n):
                    u[i] = u[i] - h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            for i in range(n):
                out[r + 1, i] = u[i]
        return out

    return integrate


_descent_dense = _make_descent_chunk(_grad_dense)
_descent_csr = _make_descent_chunk(_grad_csr)
_integrate_dense = _make_integrator(_grad_dense)
_integrate_csr = _make_integrator(_grad_csr)

_JIT = {
    "dense": (_grad_dense, _descent_dense, _integrate_dense),
    "csr": (_grad_csr, _descent_csr, _integrate_csr),
}


def operator_arrays(Q):
    """Split Q into ``(kind, op)`` where op is the tuple the jit kernels take."""
    if sp.issparse(Q):
        Q = sp.csr_matrix(Q)
        return "csr", (np.ascontiguousarray(Q.data, dtype=np.float64),
                       np.ascontiguousarray(Q.indices, dtype=np.int64),
                       np.ascontiguousarray(Q.indptr, dtype=np.int64))
    return "dense", (np.ascontiguousarray(Q, dtype=np.float64),)


# ---------------------------------------------------------------------------
# numpy kernels

def grad_numpy(Q, c, w, alpha, u):
    return Q @ u + w * np.maximum(u, 0.0) ** alpha - c


def _descent_chunk_numpy(Q, c, w, alpha, u, tau, k_start, k_stop, max_iter,
                         u_star, has_star, eps_dist, eps_grad, grad_floor, div_limit, u0,
                         dist_out, gnorm_out, iter_out, record, record_iter):
    ref = u_star if has_star else u0
    for k in range(k_start, k_stop):
        g = grad_numpy(Q, c, w, alpha, u)
        gn = math.sqrt(float(np.dot(g, g)))
        diff = u - ref
        d = math.sqrt(float(np.dot(diff, diff)))
        j = k - k_start
        if record:
            dist_out[j] = d if has_star else np.nan
            gnorm_out[j] = gn
        if record_iter:
            iter_out[j] = u
        if has_star and d <= eps_dist:
            return k, TARGET
        if not has_star and gn <= eps_grad:
            return k, TARGET
        if gn <= grad_floor:
            return k, TARGET
        if not (d <= div_limit and gn < np.inf):
            return k, DIVERGED
        if k >= max_iter:
            return k, MAX_ITER
        u[:] = u - tau * g
    return k_stop, RUNNING


def _integrate_numpy(Q, c, w, alpha, u0, h, substeps, n_reports, method, out):
    u = u0.copy()
    out[0] = u
    for r in range(n_reports):
        for _ in range(substeps):
            k1 = grad_numpy(Q, c, w, alpha, u)
            if method == EULER:
                u = u - h * k1
                continue
            k2 = grad_numpy(Q, c, w, alpha, u - 0.5 * h * k1)
            k3 = grad_numpy(Q, c, w, alpha, u - 0.5 * h * k2)
            k4 = grad_numpy(Q, c, w, alpha, u - h * k3)
            u = u - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[r + 1] = u
    return out


# ---------------------------------------------------------------------------
# dispatch

def gradient(Q, c, w, alpha, u, jit=None):
    """Gradient of the semilinear form at ``u`` on the selected backend."""
    jit = JIT_ENABLED if jit is None else jit
    u = np.ascontiguousarray(u, dtype=np.float64)
    if not jit:
        return grad_numpy(Q, c, w, alpha, u)
    kind, op = operator_arrays(Q)
    out = np.empty_like(u)
    _JIT[kind][0](op, c, float(w), float(alpha), u, out)
    return out


def descent(Q, c, w, alpha, u0, tau, max_iter, *, u_star=None, eps_dist=-1.0,
            eps_grad=-1.0, grad_floor=0.0, div_limit=np.inf, record=True,
            record_iterates=False, chunk=DEFAULT_CHUNK, jit=None):
    """Run fixed-step descent ``u <- u - tau * grad f(u)``.

    Iteration ``k`` evaluates the gradient at ``u_k``, records
    ``(dist_k, gnorm_k)``, tests the stop rules in the order target,
    divergence, iteration cap, then steps.  When ``u_star`` is None the
    divergence test measures the distance to ``u0`` instead.

    Returns ``(iterations, stop_code, u_final, dist, gnorm, iterates)``;
    the arrays are empty when not recorded.
    """
    jit = JIT_ENABLED if jit is None else jit
    u0 = np.ascontiguousarray(u0, dtype=np.float64)
    n = u0.shape[0]
    has_star = u_star is not None
    star = np.ascontiguousarray(u_star, dtype=np.float64) if has_star else np.zeros(n)
    u = u0.copy()
    if jit:
        kind, op = operator_arrays(Q)
        run = _JIT[kind][1]
    else:
        op = Q
        run = _descent_chunk_numpy
    c = np.ascontiguousarray(c, dtype=np.float64)
    dists, gnorms, iters = [], [], []
    k, code = 0, RUNNING
    while code == RUNNING:
        k_stop = min(k + chunk, max_iter + 1)
        length = k_stop - k
        d_buf = np.empty(length if record else 0)
        g_buf = np.empty(length if record else 0)
        i_buf = np.empty((length, n) if record_iterates else (0, n))
        k_end, code = run(op, c, float(w), float(alpha), u, float(tau), k, k_stop, max_iter,
                          star, has_star, float(eps_dist), float(eps_grad), float(grad_floor),
                          float(div_limit), u0, d_buf, g_buf, i_buf, record, record_iterates)
        filled = k_end - k + (1 if code != RUNNING else 0)
        if record:
            dists.append(d_buf[:filled])
            gnorms.append(g_buf[:filled])
        if record_iterates:
            iters.append(i_buf[:filled])
        k = k_end
    dist = np.concatenate(dists) if dists else np.empty(0)
    gnorm = np.concatenate(gnorms) if gnorms else np.empty(0)
    iterates = np.concatenate(iters) if iters else np.empty((0, n))
    return k, code, u, dist, gnorm, iterates


def integrate(Q, c, w, alpha, u0, h, substeps, n_reports, method="rk4", jit=None):
    """Fixed-step integration of ``du/dt = -grad f(u)``.

    Takes ``substeps`` steps of size ``h`` between consecutive reports and
    returns the ``(n_reports + 1, n)`` array of reported states.
    """
    jit = JIT_ENABLED if jit is None else jit
    code = METHODS[method]
    u0 = np.ascontiguousarray(u0, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    out = np.empty((n_reports + 1, u0.shape[0]))
    if jit:
        kind, op = operator_arrays(Q)
        return _JIT[kind][2](op, c, float(w), float(alpha), u0, float(h), int(substeps),
                             int(n_reports), code, out)
    return _integrate_numpy(Q, c, float(w), float(alpha), u0, float(h), int(substeps),
                            int(n_reports), code, out)
