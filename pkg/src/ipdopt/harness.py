"""Experiment specs, presets, sweep orchestration and CSV persistence.

A spec file is plain text, one ``key = value`` per line. ``#`` starts a
comment. List-valued keys take comma-separated values. See the README for
the full key reference.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .baselines import run_exact_admm, run_push_diging
from .errors import DivergenceError, InnerSolveError, ParseError, SpecError
from .graph import DirectedGraph, GraphFacts, analyze, read_edge_list, ring_with_random_chords
from .ipd import Reference, RunConfig, reference_solution, run_ipd
from .metrics import METHODS, Trace, TraceRecord, derive_parameters, fit_geometric_rate
from .objectives import (Objective, QuadraticObjective, agent_logistic_objectives, parse_libsvm,
                         partition_uniform, random_centers, read_centers, synthetic_logistic_dataset)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentSpec:
    methods: tuple[str, ...] = ("ipd",)
    # graph
    n: int = 10
    chord_probability: float = 0.2
    graph_seed: int = 0
    graph_file: str | None = None
    # objectives
    objective: str = "quadratic"
    dimension: int = 5
    samples: int = 5000
    data_seed: int = 0
    data_file: str | None = None
    ridge: float = 1e-3
    partition_seed: int = 0
    curvature: float = 1.0
    # algorithm
    parameters: str = "manual"
    eta: tuple[float, ...] = (0.1,)
    rho: float = 1.0
    B: tuple[int, ...] = (1,)
    q: tuple[float, ...] = (1.0,)
    seeds: tuple[int, ...] = (0,)
    delta: float = 0.9
    max_rounds: int = 1000
    stop_tolerance: float = 1e-8
    target: float = 0.1
    inner_tol: float = 1e-8
    initial_weight: str = "auto"
    balance_variant: str = "receiver"
    xi_init: str = "primal"
    reference_tol: float = 1e-10
    out: str = "results"


_LIST_KEYS = {"methods", "eta", "B", "q", "seeds"}
_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentSpec)}


def _convert(key: str, text: str):
    kind = _FIELD_TYPES[key]
    if key in _LIST_KEYS:
        items = [t.strip() for t in text.split(",") if t.strip()]
        if key == "methods":
            return tuple(items)
        cast = int if key in ("B", "seeds") else float
        return tuple(cast(t) for t in items)
    if kind.startswith("int"):
        return int(text)
    if kind.startswith("float"):
        return float(text)
    return text


def parse_spec(lines: Iterable[str], base: ExperimentSpec | None = None,
               base_dir: Path | None = None) -> ExperimentSpec:
    """Parse ``key = value`` lines on top of ``base`` and validate the result."""
    values: dict = {}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, text = line.partition("=")
        key, text = key.strip(), text.strip()
        if not sep:
            raise ParseError(f"expected 'key = value', got {line!r}", lineno)
        if key not in _FIELD_TYPES:
            raise ParseError(f"unknown key {key!r}", lineno)
        if key in seen:
            raise ParseError(f"duplicate key {key!r} (first set on line {seen[key]})", lineno)
        seen[key] = lineno
        try:
            values[key] = _convert(key, text)
        except ValueError:
            raise ParseError(f"bad value for {key!r}: {text!r}", lineno) from None
    for key in ("graph_file", "data_file"):
        if values.get(key) and base_dir is not None and not Path(values[key]).is_absolute():
            values[key] = str(base_dir / values[key])
    spec = replace(base or ExperimentSpec(), **values)
    validate_spec(spec)
    return spec


def load_spec(path: str | Path, base: ExperimentSpec | None = None) -> ExperimentSpec:
    path = Path(path)
    with path.open() as fh:
        return parse_spec(fh, base, path.parent)


def dumps_spec(spec: ExperimentSpec) -> str:
    out = []
    for f in fields(spec):
        v = getattr(spec, f.name)
        if v is None:
            continue
        text = ", ".join(str(x) for x in v) if isinstance(v, tuple) else str(v)
        out.append(f"{f.name} = {text}")
    return "\n".join(out) + "\n"


def validate_spec(spec: ExperimentSpec) -> None:
    problems: list[tuple[str, str]] = []

    def need(ok: bool, name: str, msg: str):
        if not ok:
            problems.append((name, msg))

    need(len(spec.methods) > 0, "methods", "at least one method required")
    for m in spec.methods:
        need(m in METHODS, "methods", f"unknown method {m!r}; expected one of {', '.join(METHODS)}")
    for name in ("eta", "B", "q", "seeds"):
        need(len(getattr(spec, name)) > 0, name, "sweep axis must not be empty")
    need(all(e > 0 for e in spec.eta), "eta", "stepsizes must be positive")
    need(spec.rho > 0, "rho", "must be positive")
    need(all(b >= 1 for b in spec.B), "B", "inner rounds must be >= 1")
    need(all(0 < q <= 1 for q in spec.q), "q", "activation probabilities must lie in (0, 1]")
    need(0 < spec.delta < 1, "delta", "must lie in (0, 1)")
    need(spec.max_rounds >= 1, "max_rounds", "must be >= 1")
    need(spec.stop_tolerance >= 0, "stop_tolerance", "must be nonnegative")
    need(spec.target > 0, "target", "must be positive")
    need(spec.inner_tol > 0, "inner_tol", "must be positive")
    need(spec.reference_tol > 0, "reference_tol", "must be positive")
    need(spec.objective in ("quadratic", "logistic"), "objective", "must be 'quadratic' or 'logistic'")
    need(spec.parameters in ("manual", "corollary", "theorem"), "parameters",
         "must be 'manual', 'corollary' or 'theorem'")
    need(spec.balance_variant in ("receiver", "sender"), "balance_variant", "must be 'receiver' or 'sender'")
    need(spec.xi_init in ("primal", "primal_plus_dual"), "xi_init", "must be 'primal' or 'primal_plus_dual'")
    if spec.initial_weight not in ("auto", "max_admissible", "edge_count", "diameter_bound"):
        try:
            need(float(spec.initial_weight) > 0, "initial_weight", "explicit weight must be positive")
        except ValueError:
            problems.append(("initial_weight", f"unknown choice {spec.initial_weight!r}"))
    if spec.graph_file is None:
        need(spec.n >= 1, "n", "must be >= 1")
        need(0 <= spec.chord_probability <= 1, "chord_probability", "must lie in [0, 1]")
    else:
        need(Path(spec.graph_file).is_file(), "graph_file", f"file not found: {spec.graph_file}")
    if spec.data_file is not None:
        need(Path(spec.data_file).is_file(), "data_file", f"file not found: {spec.data_file}")
    else:
        need(spec.dimension >= 1, "dimension", "must be >= 1")
        if spec.objective == "logistic":
            need(spec.samples >= 1, "samples", "must be >= 1")
    need(spec.curvature > 0, "curvature", "must be positive")
    need(spec.ridge >= 0, "ridge", "must be nonnegative")
    if problems:
        raise SpecError(problems)


# ---------------------------------------------------------------------------
# Presets: synthetic stand-ins for the logistic experiments at n=50, d=22

_LOGISTIC = ExperimentSpec(
    n=50, objective="logistic", dimension=22, samples=5000, ridge=1e-3,
    eta=(1.0,), rho=1.0, B=(1,), max_rounds=3000, stop_tolerance=1e-2,
)

PRESETS: dict[str, ExperimentSpec] = {
    # computation to reach the target, inexact vs exact local steps
    "fig1a": replace(_LOGISTIC, methods=("ipd", "exact_admm"), inner_tol=1e-8),
    # convergence paths for several inner-round counts
    "fig1b": replace(_LOGISTIC, B=(1, 2, 5, 10), max_rounds=300, stop_tolerance=0.0),
    # participation levels at B=5
    "fig2a": replace(_LOGISTIC, B=(5,), q=(0.3, 0.5, 0.8, 1.0), seeds=tuple(range(5)),
                     max_rounds=300, stop_tolerance=0.0),
    # shared stepsize grid against Push-DIGing
    "fig2b": replace(_LOGISTIC, methods=("ipd", "push_diging"), eta=(0.05, 0.1, 0.2, 0.5, 1.0)),
}


# ---------------------------------------------------------------------------
# Problem construction

@dataclass
class Problem:
    graph: DirectedGraph
    facts: GraphFacts
    objectives: list[Objective]
    reference: Reference

    @property
    def m_f(self) -> float:
        return min(o.strong_convexity for o in self.objectives)

    @property
    def M_f(self) -> float:
        return max(o.smoothness for o in self.objectives)


def build_graph(spec: ExperimentSpec) -> DirectedGraph:
    if spec.graph_file is not None:
        with open(spec.graph_file) as fh:
            return read_edge_list(fh)
    if spec.n == 1:
        return DirectedGraph.cycle(1)
    return ring_with_random_chords(spec.n, spec.chord_probability, spec.graph_seed)


def build_objectives(spec: ExperimentSpec, n: int) -> list[Objective]:
    if spec.objective == "quadratic":
        if spec.data_file is not None:
            with open(spec.data_file) as fh:
                centers = read_centers(fh)
            if len(centers) != n:
                raise SpecError([("data_file", f"{len(centers)} centers for {n} agents")])
        else:
            centers = random_centers(n, spec.dimension, spec.data_seed)
        return [QuadraticObjective(c, spec.curvature) for c in centers]
    if spec.data_file is not None:
        with open(spec.data_file) as fh:
            data = parse_libsvm(fh)
    else:
        data = synthetic_logistic_dataset(spec.samples, spec.dimension, spec.data_seed)
    return agent_logistic_objectives(data, partition_uniform(data, n, spec.partition_seed), spec.ridge)


def build_problem(spec: ExperimentSpec) -> Problem:
    g = build_graph(spec)
    objectives = build_objectives(spec, g.n)
    return Problem(g, analyze(g), objectives, reference_solution(objectives, spec.reference_tol))


# ---------------------------------------------------------------------------
# Running

@dataclass(frozen=True)
class RunPoint:
    method: str
    B: int | None
    q: float | None
    eta: float | None
    seed: int | None

    @property
    def stem(self) -> str:
        parts = [self.method]
        if self.B is not None:
            parts.append(f"B{self.B}")
        if self.q is not None:
            parts.append(f"q{self.q:g}")
        if self.eta is not None:
            parts.append(f"eta{self.eta:g}")
        if self.seed is not None:
            parts.append(f"seed{self.seed}")
        return "_".join(parts)


def sweep_points(spec: ExperimentSpec) -> list[RunPoint]:
    """Cross product of the sweep axes that apply to each method.

    Push-DIGing has no inner rounds, participation or randomness, so it is run
    once per stepsize; exact ADMM does not use a stepsize.
    """
    points = []
    for m in spec.methods:
        if m == "ipd":
            axes = itertools.product(spec.B, spec.q, spec.eta, spec.seeds)
            points += [RunPoint(m, b, q, e, s) for b, q, e, s in axes]
        elif m == "exact_admm":
            axes = itertools.product(spec.B, spec.q, spec.seeds)
            points += [RunPoint(m, b, q, None, s) for b, q, s in axes]
        else:
            points += [RunPoint(m, None, None, e, None) for e in spec.eta]
    return points


def resolve_parameters(spec: ExperimentSpec, problem: Problem, point: RunPoint) -> tuple[float, float, int]:
    """``(eta, rho, B)`` for a run; derived from the conditioning unless ``parameters = manual``."""
    if spec.parameters == "manual":
        return point.eta, spec.rho, point.B
    cert = derive_parameters(problem.m_f, problem.M_f, spec.delta, spec.parameters,
                             lambda2=problem.facts.lambda2)
    return cert.eta, cert.rho, cert.B_min


def _initial_weight(spec: ExperimentSpec):
    try:
        return float(spec.initial_weight)
    except ValueError:
        return spec.initial_weight


def run_point(spec: ExperimentSpec, problem: Problem, point: RunPoint) -> Trace:
    p = problem
    if point.method == "push_diging":
        return run_push_diging(p.graph, p.objectives, point.eta, spec.max_rounds, spec.stop_tolerance,
                               facts=p.facts, reference=p.reference)
    eta, rho, B = resolve_parameters(spec, p, point if point.eta is not None else replace(point, eta=1.0))
    common = dict(initial_weight=_initial_weight(spec), balance_variant=spec.balance_variant,
                  xi_init=spec.xi_init, delta=spec.delta)
    if point.method == "exact_admm":
        return run_exact_admm(p.graph, p.objectives, rho, B, spec.inner_tol, spec.max_rounds,
                              spec.stop_tolerance, q=point.q, seed=point.seed, facts=p.facts,
                              reference=p.reference, **common)
    config = RunConfig(eta=eta, rho=rho, B=B, q=point.q, seed=point.seed,
                       max_outer_iterations=spec.max_rounds, stop_tolerance=spec.stop_tolerance, **common)
    return run_ipd(p.graph, p.objectives, config, facts=p.facts, reference=p.reference)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_trace_csv(trace: Trace, path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TraceRecord.header())
        for rec in trace.records:
            w.writerow([_fmt(v) for v in rec.row()])


def read_trace_csv(path: Path) -> list[TraceRecord]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    types = [f.type for f in fields(TraceRecord)]
    out = []
    for r in body:
        vals = [int(v) if t == "int" else float(v) for v, t in zip(r, types)]
        out.append(TraceRecord(**dict(zip(header, vals))))
    return out


SUMMARY_COLUMNS = ("method", "B", "q", "eta", "rho", "seed", "status", "rounds", "final_error",
                   "rounds_to_target", "grads_to_target", "scalars_to_target", "fitted_rate",
                   "fit_r_squared", "trace_file", "message")


@dataclass
class SummaryRow:
    method: str
    B: int | None
    q: float | None
    eta: float | None
    rho: float | None
    seed: int | None
    status: str
    rounds: int
    final_error: float
    rounds_to_target: int | None
    grads_to_target: int | None
    scalars_to_target: int | None
    fitted_rate: float | None
    fit_r_squared: float | None
    trace_file: str
    message: str = ""

    def row(self) -> list[str]:
        return [_fmt(getattr(self, c)) for c in SUMMARY_COLUMNS]


def summarize(spec: ExperimentSpec, point: RunPoint, trace: Trace, rho: float | None,
              trace_file: str) -> SummaryRow:
    hit = trace.first_reaching(spec.target)
    rate = r2 = None
    errs = trace.errors
    if len(errs) >= 13 and np.all(errs > 0):
        fit = fit_geometric_rate(errs)
        rate, r2 = fit.rate, fit.r_squared
    final = trace.final
    return SummaryRow(
        method=point.method, B=point.B, q=point.q, eta=point.eta, rho=rho, seed=point.seed,
        status=trace.status, rounds=final.round, final_error=final.relative_cost_error,
        rounds_to_target=None if hit is None else hit.round,
        grads_to_target=None if hit is None else hit.gradient_evals,
        scalars_to_target=None if hit is None else hit.broadcast_scalars,
        fitted_rate=rate, fit_r_squared=r2, trace_file=trace_file, message=trace.message,
    )


def run_experiment(spec: ExperimentSpec, out_dir: str | Path | None = None,
                   problem: Problem | None = None) -> list[SummaryRow]:
    """Run every sweep point, writing one trace CSV each plus ``summary.csv``.

    A diverging or failing run is recorded in the summary and the sweep continues.
    """
    out = Path(out_dir if out_dir is not None else spec.out)
    out.mkdir(parents=True, exist_ok=True)
    problem = build_problem(spec) if problem is None else problem
    rows = []
    for point in sweep_points(spec):
        rho = None
        if point.method != "push_diging":
            rho = resolve_parameters(spec, problem, replace(point, eta=point.eta or 1.0))[1]
        name = point.stem + ".csv"
        try:
            trace = run_point(spec, problem, point)
        except (DivergenceError, InnerSolveError) as exc:
            trace = getattr(exc, "trace", None) or Trace(point.method)
            trace.status = "diverged" if isinstance(exc, DivergenceError) else "inner_solve_failed"
            trace.message = str(exc)
            log.warning("%s: %s", point.stem, exc)
        if trace.records:
            write_trace_csv(trace, out / name)
            rows.append(summarize(spec, point, trace, rho, name))
        else:
            rows.append(SummaryRow(point.method, point.B, point.q, point.eta, rho, point.seed,
                                   trace.status, 0, math.nan, None, None, None, None, None, "",
                                   trace.message))
    with (out / "summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow(r.row())
    return rows
