"""Command-line entry point: ``holder-descent <subcommand> [flags]``.

Flags may also come from a ``key = value`` file given with ``--config``;
command-line flags win.  Exit status is 0 when every requested check
passes, 1 when a check fails or a run errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import bench, flow, problems
from ._accel import backend_name
from .errors import HolderDescentError

SUBCOMMANDS = ("sweep-stepsize", "sweep-alpha", "scaling", "flow-error", "certify", "info")
OUT_ENV = "HOLDER_DESCENT_OUT"

# flag name -> (parser, help)
_FLAGS = {
    "n": (int, "problem dimension"),
    "seed": (int, "generator seed"),
    "alpha": ("floats", "Hoelder exponent(s), comma separated"),
    "tau": ("floats", "stepsize(s), comma separated"),
    "eps": ("floats", "target accuracies, comma separated"),
    "max_iter": (int, "iteration cap (flow-error: number of Euler steps K)"),
    "out": (str, f"output directory (default ${OUT_ENV} or ./results)"),
    "problem": (str, "composite, scalar or poisson"),
    "nu": (float, "Poisson nonlinearity weight"),
    "lambda": (float, "curvature of the scalar example"),
    "m": (int, "Poisson interior grid points per side"),
    "horizon": (float, "flow-error time horizon T"),
    "samples": (int, "certifier sample pairs"),
    "jobs": (int, "concurrent runs (default: hardware threads)"),
    "window": (int, "plateau detection window"),
    "rel_tol": (float, "plateau detection relative tolerance"),
}


class UsageError(HolderDescentError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class CliInvocation:
    subcommand: str
    flags: dict = field(default_factory=dict)
    config_path: Optional[str] = None
    no_svg: bool = False


def _floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in str(text).split(",") if x.strip())
    except ValueError:
        raise UsageError(f"not a number list: {text!r}") from None


def _convert(key, raw):
    kind = _FLAGS[key][0]
    if kind == "floats":
        return _floats(raw)
    try:
        return kind(raw)
    except ValueError:
        raise UsageError(f"--{key.replace('_', '-')}: invalid value {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="holder-descent",
                     description="Fixed-stepsize gradient descent on Hoelder-gradient problems.")
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        for key, (_, help_text) in _FLAGS.items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, help=help_text)
        p.add_argument("--config", dest="config", default=None, help="key = value file")
        p.add_argument("--no-svg", action="store_true", help="skip SVG charts")
    return parser


def read_config_file(path) -> dict:
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in _FLAGS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _convert(key, value.strip())
    return values


def _validate(flags: dict):
    def bad(key, why):
        raise UsageError(f"--{key.replace('_', '-')} {flags[key]!r}: {why}")

    for a in flags.get("alpha", ()):
        if not 0.0 < a <= 1.0:
            raise UsageError(f"--alpha {a:g}: must lie in (0, 1]")
    for key in ("tau", "eps"):
        if any(not v > 0.0 for v in flags.get(key, ())):
            bad(key, "values must be positive")
        if key in flags and not flags[key]:
            bad(key, "empty list")
    for key in ("n", "max_iter", "samples", "jobs", "window"):
        if key in flags and flags[key] < 1:
            bad(key, "must be at least 1")
    for key in ("nu", "lambda", "horizon", "rel_tol"):
        if key in flags and not flags[key] > 0.0:
            bad(key, "must be positive")
    if "m" in flags and flags["m"] < 2:
        bad("m", "must be at least 2")
    if "problem" in flags and flags["problem"] not in ("composite", "scalar", "poisson"):
        bad("problem", "choose composite, scalar or poisson")


def parse_invocation(argv) -> CliInvocation:
    """Parse ``argv`` (without the program name) into a validated invocation."""
    argv = list(argv)
    if not argv:
        raise UsageError("no subcommand given")
    ns = build_parser().parse_args(argv)
    if ns.subcommand is None:
        raise UsageError("no subcommand given")
    flags = read_config_file(ns.config) if ns.config else {}
    for key in _FLAGS:
        raw = getattr(ns, key)
        if raw is not None:
            flags[key] = _convert(key, raw)
    _validate(flags)
    return CliInvocation(ns.subcommand, flags, ns.config, ns.no_svg)


# ---------------------------------------------------------------------------

def _out_dir(flags) -> Path:
    return Path(flags.get("out") or os.environ.get(OUT_ENV) or "results")


def _experiment(kind, flags) -> bench.ExperimentConfig:
    overrides = {}
    for flag, name in (("n", "n"), ("seed", "seed"), ("max_iter", "max_iter"), ("jobs", "jobs"),
                       ("window", "window"), ("rel_tol", "rel_tol")):
        if flag in flags:
            overrides[name] = flags[flag]
    for flag, name in (("alpha", "alphas"), ("tau", "taus"), ("eps", "epsilons")):
        if flag in flags:
            overrides[name] = tuple(flags[flag])
    overrides["output_dir"] = str(_out_dir(flags))
    return bench.default_config(kind, **overrides)


def _problem(flags, default="composite", n=5):
    kind = flags.get("problem", default)
    if kind == "scalar":
        return problems.make_scalar_example(flags.get("lambda", 1.0))
    if kind == "poisson":
        return problems.make_poisson_plus(flags.get("m", 4), flags.get("nu", 1.0))
    alpha = flags.get("alpha", (0.5,))[0]
    return problems.make_composite_problem(flags.get("n", n), alpha, flags.get("seed", 0))


def _start_point(problem):
    if isinstance(problem, problems.ScalarExampleProblem):
        return np.array([-1.0])
    if getattr(problem, "initial_point", None) is not None:
        return problem.initial_point
    return np.zeros(problem.n)


def _f6(x) -> str:
    return format(float(x), ".6g")


def _echo(out: Path, inv: CliInvocation, extra=()):
    lines = [f"subcommand = {inv.subcommand}"]
    if inv.config_path:
        lines.append(f"config = {inv.config_path}")
    for key in sorted(inv.flags):
        value = inv.flags[key]
        if isinstance(value, tuple):
            value = ",".join(format(v, ".17g") for v in value)
        elif isinstance(value, float):
            value = format(value, ".17g")
        lines.append(f"{key} = {value}")
    lines.append(f"no_svg = {str(inv.no_svg).lower()}")
    lines.extend(extra)
    bench._write(out / "config.txt", "\n".join(lines) + "\n")


def _cmd_sweep(inv, kind, stem):
    config = _experiment(kind, inv.flags)
    out = Path(config.output_dir)
    result = bench.run_stepsize_sweep(config) if kind == "stepsize_sweep" else bench.run_alpha_sweep(config)
    bench.emit_csv(result, out / f"{stem}.csv")
    if not inv.no_svg:
        bench.emit_svg_chart(result, out / f"{stem}.svg", log_y=True)
    _echo(out, inv, ["# resolved experiment"] + bench.config_lines(config))
    ok = True
    for rec, plateau in zip(result.records, result.plateaus):
        level = "none" if plateau is None else _f6(plateau[0])
        print(f"{rec.label}  iterations={rec.iterations}  stop={rec.stop_reason}  "
              f"final_dist={_f6(rec.final_dist)}  plateau={level}")
        ok &= rec.stop_reason != "diverged"
    return 0 if ok else 1


def _cmd_scaling(inv):
    config = _experiment("scaling", inv.flags)
    out = Path(config.output_dir)
    fit = bench.run_complexity_scaling(config)
    bench.emit_csv(fit, out / "scaling.csv")
    if not inv.no_svg and any(fit.included):
        bench.emit_svg_chart(fit, out / "scaling.svg")
    _echo(out, inv, ["# resolved experiment"] + bench.config_lines(config))
    for e, k, b, r in zip(fit.epsilons, fit.iterations, fit.bounds, fit.stop_reasons):
        print(f"eps={_f6(e)}  iterations={k}  bound={b}  stop={r}")
    print(f"slope={_f6(fit.slope)}  r2={_f6(fit.r2)}")
    return 0 if all(fit.included) and fit.within_bounds else 1


def _cmd_flow_error(inv):
    flags = inv.flags
    problem = _problem(flags, default="scalar")
    u0 = _start_point(problem)
    out = _out_dir(flags)
    spec = problem.spec
    if "max_iter" in flags and ("tau" in flags or "horizon" not in flags):
        K = flags["max_iter"]
        tau = flags.get("tau", (0.125,))[0]
        T = tau * K
    elif "horizon" in flags:
        T = flags["horizon"]
        if "max_iter" in flags:
            K = flags["max_iter"]
        else:
            probe = flow.reference_flow(problem, u0, T, T / 256)
            M = flow.estimate_M(probe, problem)
            K, _ = flow.min_steps_condition(T, spec.mu, M, spec.delta, spec.alpha, spec.beta)
    else:
        tau = flags.get("tau", (0.125,))[0]
        K = 8
        T = tau * K
    cert = flow.discretization_error_profile(problem, u0, T, K)
    bench.emit_csv(cert, out / "certificate.csv", header=[f"problem = {problem.label}"])
    if not inv.no_svg:
        bench.emit_svg_chart(cert, out / "certificate.svg", log_y=True)
    _echo(out, inv, ["# problem"] + problem.describe().splitlines()
          + [f"T = {format(T, '.17g')}", f"K = {K}"])
    print(f"{problem.label}  K={K}  tau={_f6(cert.tau)}  max_E={_f6(cert.max_error)}  "
          f"bound={_f6(cert.bound)}  M={_f6(cert.M)}  pass={str(cert.passed).lower()}  "
          f"guaranteed={str(cert.guaranteed).lower()} (K_required={cert.K_required})")
    return 0 if cert.passed else 1


def _admissible_point(problem, rng):
    u = problems._center(problem) + rng.standard_normal(problem.n)
    small = np.abs(u) < 0.1
    u[small] = np.where(u[small] < 0.0, -0.1, 0.1)
    return u


def _cmd_certify(inv):
    flags = inv.flags
    problem = _problem(flags, default="composite")
    spec = problem.spec
    samples = flags.get("samples", 10_000)
    seed = flags.get("seed", 0)
    out = _out_dir(flags)
    hol = problems.certify_holder(problem, spec.alpha, spec.beta, spec.delta, samples, seed)
    cvx = problems.certify_strong_convexity(problem, spec.mu, samples, seed)
    fd = problems.finite_diff_grad_check(problem, _admissible_point(problem, problems.rng_from_seed(seed)))
    rows = [("holder_max_ratio", hol.max_ratio, spec.beta, hol.passed),
            ("strong_convexity_value_margin", cvx.worst_value_margin, 0.0, cvx.passed),
            ("strong_convexity_monotone_margin", cvx.worst_monotone_margin, 0.0, cvx.passed),
            ("finite_difference_error", fd, 1e-5, fd <= 1e-5)]
    lines = [f"# problem = {problem.label}", f"# samples = {samples}", f"# seed = {seed}",
             "check,value,threshold,pass"]
    lines += [f"{name},{format(v, '.17g')},{format(t, '.17g')},{str(bool(p)).lower()}"
              for name, v, t, p in rows]
    bench._write(out / "certify.csv", "\n".join(lines) + "\n")
    _echo(out, inv, ["# problem"] + problem.describe().splitlines())
    print(f"{problem.label}  holder: max_ratio={_f6(hol.max_ratio)} beta={_f6(spec.beta)} "
          f"pass={str(hol.passed).lower()}")
    print(f"{problem.label}  strong convexity: mu={_f6(spec.mu)} failures={cvx.failures} "
          f"pass={str(cvx.passed).lower()}")
    print(f"{problem.label}  finite differences: error={_f6(fd)} pass={str(fd <= 1e-5).lower()}")
    return 0 if all(r[3] for r in rows) else 1


def _cmd_info(inv):
    problem = _problem(inv.flags, default="composite")
    print(f"backend = {backend_name()}")
    sys.stdout.write(problem.describe())
    return 0


def execute(inv: CliInvocation) -> int:
    """Run an invocation; returns the process exit status."""
    try:
        if inv.subcommand == "sweep-stepsize":
            return _cmd_sweep(inv, "stepsize_sweep", "stepsize_sweep")
        if inv.subcommand == "sweep-alpha":
            return _cmd_sweep(inv, "alpha_sweep", "alpha_sweep")
        if inv.subcommand == "scaling":
            return _cmd_scaling(inv)
        if inv.subcommand == "flow-error":
            return _cmd_flow_error(inv)
        if inv.subcommand == "certify":
            return _cmd_certify(inv)
        return _cmd_info(inv)
    except (HolderDescentError, ArithmeticError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        inv = parse_invocation(argv)
    except UsageError as exc:
        build_parser().print_usage(sys.stderr)
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    return execute(inv)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
