"""Compare the numba and numpy paths of the hot kernels.

    python benchmarks/bench_kernels.py [--iters 20000] [--repeat 3]

Each row times one descent run (fixed step, no stopping target) and one
RK4 flow integration on both backends and reports the speedup.  The
first numba call of each kernel is made before timing so compilation is
excluded.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from holder_descent import kernels, problems
from holder_descent._accel import HAVE_NUMBA


def _best(func, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        func()
        best = min(best, time.perf_counter() - t0)
    return best


def _cases():
    yield "composite n=20", problems.make_composite_problem(20, 0.5, 0), 1e-4
    yield "composite n=50", problems.make_composite_problem(50, 0.5, 0), 1e-3
    yield "poisson m=16", problems.make_poisson_plus(16, 1.0), 1e-4


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--iters", type=int, default=20_000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; nothing to compare")
        return 1
    print(f"{'case':<18} {'kernel':<10} {'numpy [s]':>10} {'numba [s]':>10} {'speedup':>8}  max |diff|")
    for name, prob, tau in _cases():
        u0 = np.full(prob.n, 0.5)
        core = (prob.Q, prob.c, prob.weight, prob.alpha, u0)

        def descent(jit):
            return kernels.descent(*core, tau, args.iters, grad_floor=-1.0, record=True, jit=jit)

        steps = max(1, args.iters // 100)

        def flow(jit):
            return kernels.integrate(*core, tau / 4, 4, steps // 4 or 1, "rk4", jit=jit)

        for kname, run in (("descent", descent), ("rk4 flow", flow)):
            run(True)
            t_np = _best(lambda: run(False), args.repeat)
            t_nb = _best(lambda: run(True), args.repeat)
            a, b = run(False), run(True)
            ua = a[2] if isinstance(a, tuple) else a
            ub = b[2] if isinstance(b, tuple) else b
            diff = float(np.max(np.abs(ua - ub)))
            print(f"{name:<18} {kname:<10} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>8.1f}  {diff:.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
