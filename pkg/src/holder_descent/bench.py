"""Experiment sweeps, the complexity-scaling study and their CSV/SVG output."""

from __future__ import annotations

import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import problems
from .descent import (RunRecord, StepsizePolicy, detect_stagnation, iterations_to_target,
                      predict_stagnation_level, refined_iteration_bound, refined_stepsize, run_gd)
from .errors import ConfigurationError, HolderDescentError
from .flow import ErrorCertificate

KINDS = ("stepsize_sweep", "alpha_sweep", "scaling", "flow_error", "certify")

SWEEP_TAUS = (0.01, 0.005, 0.001, 0.0005)
SWEEP_ALPHAS = (0.2, 0.4, 0.6, 0.8)
SCALING_EPSILONS = tuple(10.0 ** -e for e in (1.0, 1.5, 2.0, 2.5, 3.0))


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    n: int = 50
    seed: int = 0
    alphas: tuple = (0.5,)
    taus: tuple = SWEEP_TAUS
    epsilons: tuple = SCALING_EPSILONS
    max_iter: int = 10_000
    output_dir: str = "results"
    window: int = 100
    rel_tol: float = 1e-2
    jobs: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown experiment kind {self.kind!r}")
        if self.n < 1 or self.max_iter < 1:
            raise ConfigurationError("n and max_iter must be positive")
        if self.kind in ("stepsize_sweep", "alpha_sweep", "scaling") and not self.alphas:
            raise ConfigurationError(f"{self.kind} needs at least one alpha")
        if self.kind in ("stepsize_sweep", "alpha_sweep") and not self.taus:
            raise ConfigurationError(f"{self.kind} needs at least one tau")
        if self.kind == "scaling":
            if len(self.alphas) != 1:
                raise ConfigurationError("scaling runs one alpha at a time")
            if len(self.epsilons) < 3:
                raise ConfigurationError("scaling needs at least three epsilons")
            if list(self.epsilons) != sorted(self.epsilons, reverse=True):
                raise ConfigurationError("scaling epsilons must be sorted decreasing")
        if any(not 0.0 < a <= 1.0 for a in self.alphas):
            raise ConfigurationError("every alpha must lie in (0, 1]")
        if any(not t > 0.0 for t in self.taus) or any(not e > 0.0 for e in self.epsilons):
            raise ConfigurationError("taus and epsilons must be positive")


def default_config(kind: str, **overrides) -> ExperimentConfig:
    """Reference experiment settings for ``kind``, then ``overrides``."""
    base = {
        "stepsize_sweep": dict(n=50, alphas=(0.5,), taus=SWEEP_TAUS),
        "alpha_sweep": dict(n=50, alphas=SWEEP_ALPHAS, taus=(0.001,)),
        "scaling": dict(n=20, alphas=(0.5,), epsilons=SCALING_EPSILONS),
        "flow_error": dict(n=5),
        "certify": dict(n=5),
    }[kind]
    base.update(overrides)
    return ExperimentConfig(kind=kind, **base)


@dataclass(frozen=True, eq=False)
class SweepResult:
    config: ExperimentConfig
    records: list
    plateaus: list
    predicted: list
    notes: str = ""


@dataclass(frozen=True, eq=False)
class ScalingFit:
    epsilons: list
    iterations: list
    slope: float
    intercept: float
    r2: float
    taus: list = field(default_factory=list)
    bounds: list = field(default_factory=list)
    in_hypothesis: list = field(default_factory=list)
    stop_reasons: list = field(default_factory=list)
    included: list = field(default_factory=list)
    config: Optional[ExperimentConfig] = None
    notes: str = ""

    @property
    def within_bounds(self) -> bool:
        return all(k <= b for k, b, inc in zip(self.iterations, self.bounds, self.included) if inc)


def _workers(config) -> int:
    return config.jobs if config.jobs > 0 else (os.cpu_count() or 1)


def _map(config, func, items):
    items = list(items)
    if _workers(config) == 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=_workers(config)) as pool:
        # map() yields in submission order, never completion order
        return list(pool.map(func, items))


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _short(x) -> str:
    return format(float(x), "g")


def _sweep(config: ExperimentConfig, grid):
    """Run ``(problem, tau, label)`` grid points with plateau detection."""

    def one(point):
        problem, tau, label = point
        return run_gd(problem, problem.initial_point, StepsizePolicy.fixed(tau), config.max_iter,
                      seed=config.seed, label=label)

    records = _map(config, one, grid)
    plateaus = [detect_stagnation(rec, config.window, config.rel_tol) for rec in records]
    predicted = [predict_stagnation_level(p.spec.mu, p.spec.beta, p.alpha, tau) for p, tau, _ in grid]
    return records, plateaus, predicted


def run_stepsize_sweep(config: ExperimentConfig) -> SweepResult:
    """One planted problem, fixed-tau descent for each tau, pure iteration cap."""
    if config.kind != "stepsize_sweep":
        raise ConfigurationError("run_stepsize_sweep needs kind = stepsize_sweep")
    problem = problems.make_composite_problem(config.n, config.alphas[0], config.seed)
    grid = [(problem, tau, f"τ={_short(tau)}") for tau in config.taus]
    records, plateaus, predicted = _sweep(config, grid)
    return SweepResult(config, records, plateaus, predicted, notes=f"problem {problem.label}")


def run_alpha_sweep(config: ExperimentConfig) -> SweepResult:
    """One planted problem per alpha, all sharing the same draws of u0, u* and A."""
    if config.kind != "alpha_sweep":
        raise ConfigurationError("run_alpha_sweep needs kind = alpha_sweep")
    tau = config.taus[0]
    grid = [(problems.make_composite_problem(config.n, a, config.seed), tau, f"α={_short(a)}")
            for a in config.alphas]
    records, plateaus, predicted = _sweep(config, grid)
    notes = f"u0, u* and A shared across alpha (seed {config.seed}); only c changes"
    return SweepResult(config, records, plateaus, predicted, notes=notes)


def project_to_ball(u0, center, radius):
    """Scale ``u0 - center`` back onto the closed ball when it lies outside."""
    d = np.asarray(u0, dtype=np.float64) - center
    norm = float(np.linalg.norm(d))
    if norm <= radius:
        return np.asarray(u0, dtype=np.float64).copy()
    scale = radius / norm
    out = center + d * scale
    # rounding can leave the result an ulp outside; pull it in
    while np.linalg.norm(out - center) > radius:
        scale = np.nextafter(scale, 0.0)
        out = center + d * scale
    return out


def fit_loglog(xs: Sequence[float], ys: Sequence[float]):
    """Least squares of ``log y`` on ``log x``; returns ``(slope, intercept, r2)``."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need two equal-length sequences with at least two points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    if sxx == 0.0:
        raise ValueError("degenerate fit: all x values are equal")
    slope = float(np.sum((lx - lx.mean()) * (ly - ly.mean())) / sxx)
    intercept = float(ly.mean() - slope * lx.mean())
    resid = ly - (intercept + slope * lx)
    syy = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if syy == 0.0 else max(0.0, min(1.0, 1.0 - float(np.sum(resid**2)) / syy))
    return slope, intercept, r2


def run_complexity_scaling(config: ExperimentConfig, problem=None) -> ScalingFit:
    """Iterations to reach each epsilon with the refined stepsize, and their log-log slope.

    The start point is the problem's drawn ``u0`` projected onto the
    ``delta`` ball around ``u*``.  Each run may go to twice its theoretical
    bound (or ``max_iter``, if larger); runs that hit the cap are flagged
    and left out of the fit.
    """
    if config.kind != "scaling":
        raise ConfigurationError("run_complexity_scaling needs kind = scaling")
    alpha = config.alphas[0]
    if problem is None:
        problem = problems.make_composite_problem(config.n, alpha, config.seed)
    spec = problem.spec
    star = spec.minimizer
    u0 = project_to_ball(problem.initial_point, star, spec.delta)
    d0 = float(np.linalg.norm(u0 - star))

    def one(eps):
        tau = refined_stepsize(spec.mu, spec.beta, spec.alpha, eps)
        bound = refined_iteration_bound(spec.mu, spec.beta, spec.alpha, eps, max(d0, eps))
        k, reason, _ = iterations_to_target(problem, u0, tau, eps, max(config.max_iter, 2 * bound))
        return tau, bound, k, reason

    rows = _map(config, one, config.epsilons)
    taus, bounds, iters, reasons = (list(col) for col in zip(*rows))
    included = [r == "target_reached" for r in reasons]
    notes = []
    if not all(included):
        notes.append("excluded from fit: " + ", ".join(
            _short(e) for e, inc in zip(config.epsilons, included) if not inc))
    xs = [1.0 / e for e, inc in zip(config.epsilons, included) if inc]
    ys = [max(k, 1) for k, inc in zip(iters, included) if inc]
    try:
        slope, intercept, r2 = fit_loglog(xs, ys)
    except ValueError as exc:
        slope = intercept = r2 = math.nan
        notes.append(f"fit failed: {exc}")
    inside = d0 <= spec.delta
    return ScalingFit(epsilons=list(config.epsilons), iterations=iters, slope=slope,
                      intercept=intercept, r2=r2, taus=taus, bounds=bounds,
                      in_hypothesis=[inside] * len(iters), stop_reasons=reasons,
                      included=included, config=config, notes="; ".join(notes))


# ---------------------------------------------------------------------------
# output

# settings that never change the numbers; kept out of CSV headers
_RUNTIME_FIELDS = ("output_dir", "jobs")


def config_lines(config: ExperimentConfig, runtime: bool = True) -> list:
    """``key = value`` lines for ``config``; ``runtime=False`` drops output_dir and jobs."""
    out = []
    for f in fields(config):
        if not runtime and f.name in _RUNTIME_FIELDS:
            continue
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ",".join(_fmt(v) for v in value)
        elif isinstance(value, float):
            value = _fmt(value)
        out.append(f"{f.name} = {value}")
    return out


def _write(path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise HolderDescentError(f"cannot write {path}: {exc}") from exc
    return path


def _csv_record(rec: RunRecord, buf):
    buf.write(f"# problem = {rec.problem_label}\n# policy = {rec.policy.describe()}\n")
    buf.write(f"# tau = {_fmt(rec.tau_used)}\n# seed = {rec.seed}\n# stop_reason = {rec.stop_reason}\n")
    buf.write("k,dist,grad_norm\n")
    for k, (d, g) in enumerate(zip(rec.dist, rec.grad_norm)):
        buf.write(f"{k},{_fmt(d)},{_fmt(g)}\n")


def _csv_sweep(result: SweepResult, buf):
    for line in config_lines(result.config, runtime=False):
        buf.write(f"# {line}\n")
    if result.notes:
        buf.write(f"# notes = {result.notes}\n")
    for rec, plateau, pred in zip(result.records, result.plateaus, result.predicted):
        level = "none" if plateau is None else f"{_fmt(plateau[0])} at {plateau[1]}"
        pred_s = "none" if pred is None else _fmt(pred)
        buf.write(f"# run {rec.label}: tau = {_fmt(rec.tau_used)}, stop_reason = {rec.stop_reason}, "
                  f"iterations = {rec.iterations}, plateau = {level}, predicted = {pred_s}\n")
    buf.write("run_label,k,dist,grad_norm\n")
    for rec in result.records:
        for k, (d, g) in enumerate(zip(rec.dist, rec.grad_norm)):
            buf.write(f"{rec.label},{k},{_fmt(d)},{_fmt(g)}\n")


def _csv_scaling(fit: ScalingFit, buf):
    if fit.config is not None:
        for line in config_lines(fit.config, runtime=False):
            buf.write(f"# {line}\n")
    buf.write(f"# slope = {_fmt(fit.slope)}\n# intercept = {_fmt(fit.intercept)}\n# r2 = {_fmt(fit.r2)}\n")
    if fit.notes:
        buf.write(f"# notes = {fit.notes}\n")
    buf.write("epsilon,tau,iterations,bound,in_hypothesis\n")
    for e, t, k, b, h in zip(fit.epsilons, fit.taus, fit.iterations, fit.bounds, fit.in_hypothesis):
        buf.write(f"{_fmt(e)},{_fmt(t)},{k},{b},{str(bool(h)).lower()}\n")


def _csv_certificate(cert: ErrorCertificate, buf):
    buf.write(f"# tau = {_fmt(cert.tau)}\n# K = {cert.K}\n# C_E = {_fmt(cert.C_E)}\n# M = {_fmt(cert.M)}\n")
    buf.write(f"# beta_bar = {_fmt(cert.beta_bar)}\n# binding_constraint = {cert.binding_constraint}\n")
    buf.write(f"# K_required = {cert.K_required}\n# guaranteed = {str(cert.guaranteed).lower()}\n")
    buf.write(f"# pass = {str(cert.passed).lower()}\n")
    buf.write("l,t,E_l,bound\n")
    for l, (t, e) in enumerate(zip(cert.times, cert.E)):
        buf.write(f"{l},{_fmt(t)},{_fmt(e)},{_fmt(cert.bound)}\n")


def emit_csv(result, path, header: Sequence[str] = ()) -> Path:
    """Write ``result`` as UTF-8 CSV preceded by ``#`` comment lines.

    Handles :class:`SweepResult`, :class:`ScalingFit`,
    :class:`~holder_descent.flow.ErrorCertificate` and
    :class:`~holder_descent.descent.RunRecord`.  Output bytes depend only
    on the values written.
    """
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    if isinstance(result, SweepResult):
        _csv_sweep(result, buf)
    elif isinstance(result, ScalingFit):
        _csv_scaling(result, buf)
    elif isinstance(result, ErrorCertificate):
        _csv_certificate(result, buf)
    elif isinstance(result, RunRecord):
        _csv_record(result, buf)
    else:
        raise TypeError(f"cannot write {type(result).__name__} as CSV")
    return _write(path, buf.getvalue())


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _svg(series, path, log_y, x_label, y_label, log_x=False):
    width, height, left, right, top, bottom = 720, 450, 70, 170, 20, 50
    pw, ph = width - left - right, height - top - bottom
    floor = 1e-300

    def ty(v):
        return math.log10(max(v, floor)) if log_y else v

    def tx(v):
        return math.log10(v) if log_x else v

    xs = [tx(x) for _, px, _ in series for x in px]
    ys = [ty(y) for _, _, py in series for y in py if np.isfinite(y)]
    x0, x1 = min(xs), max(xs)
    y0, y1 = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def sx(v):
        return left + (tx(v) - x0) / (x1 - x0) * pw

    def sy(v):
        return top + (1.0 - (ty(v) - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>',
           f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="13">{x_label}</text>',
           f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="13" '
           f'transform="rotate(-90 16 {top + ph / 2:.1f})">{y_label}</text>',
           f'<text x="{left}" y="{height - 30}" font-size="11">{_short(10**x0 if log_x else x0)}</text>',
           f'<text x="{left + pw}" y="{height - 30}" font-size="11" text-anchor="end">'
           f'{_short(10**x1 if log_x else x1)}</text>',
           f'<text x="{left - 4}" y="{top + ph}" font-size="11" text-anchor="end">'
           f'{_short(10**y0 if log_y else y0)}</text>',
           f'<text x="{left - 4}" y="{top + 10}" font-size="11" text-anchor="end">'
           f'{_short(10**y1 if log_y else y1)}</text>']
    for i, (label, px, py) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(px, py) if np.isfinite(y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 16 + 18 * i
        out.append(f'<line x1="{width - right + 12}" y1="{ly - 4}" x2="{width - right + 36}" '
                   f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{width - right + 42}" y="{ly}" font-size="12">{label}</text>')
    out.append("</svg>")
    return _write(path, "\n".join(out) + "\n")


def _thin(values, max_points):
    n = len(values)
    if n <= max_points:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, max_points).round().astype(int))


def emit_svg_chart(result, path, log_y: bool = True, max_points: int = 2000) -> Path:
    """Static line chart of a sweep's distances, a scaling fit or a certificate's E_l.

    Histories longer than ``max_points`` are subsampled evenly (first and
    last points kept).
    """
    if isinstance(result, ScalingFit):
        pts = [(1.0 / e, k) for e, k, inc in zip(result.epsilons, result.iterations, result.included) if inc]
        if not pts:
            raise ValueError("nothing to plot")
        bound = [(1.0 / e, b) for e, b in zip(result.epsilons, result.bounds)]
        series = [("measured", [p[0] for p in pts], [p[1] for p in pts]),
                  ("bound", [p[0] for p in bound], [p[1] for p in bound])]
        return _svg(series, path, True, "1/epsilon", "iterations", log_x=True)
    if isinstance(result, ErrorCertificate):
        l = np.arange(result.K + 1)
        series = [("E_l", l.tolist(), result.E.tolist()),
                  ("C_E tau^alpha", [0, result.K], [result.bound, result.bound])]
        return _svg(series, path, log_y, "step l", "||u_l - u(tau l)||")
    records = getattr(result, "records", None)
    if not records:
        raise ValueError("nothing to plot")
    series = []
    for rec in records:
        idx = _thin(rec.dist, max_points)
        series.append((rec.label or rec.problem_label, idx.tolist(), np.asarray(rec.dist)[idx].tolist()))
    return _svg(series, path, log_y, "iteration k", "||u_k - u*||")
