"""Comparison baselines: Push-DIGing and ADMM with exact local minimization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DivergenceError, InnerSolveError, InvalidInputError, InvalidTopologyError, NumericDegeneracyError
from .graph import DirectedGraph, GraphFacts, analyze
from .ipd import InnerHook, Reference, RunConfig, _Engine, _prepare
from .metrics import CostErrorMeter, Trace, TraceRecord, consensus_residual, cost_ledger_update
from .objectives import Objective, local_gradients, sum_objectives


def column_stochastic_C(g: DirectedGraph) -> np.ndarray:
    """``c_ij = 1 / (1 + d_j)`` on every edge ``j -> i`` and on the diagonal."""
    share = 1.0 / (1.0 + g.degrees)
    return (np.eye(g.n) + g.adjacency) * share[None, :]


@dataclass
class PushDigingState:
    u: np.ndarray
    v: np.ndarray
    x: np.ndarray
    y_tracker: np.ndarray
    grad: np.ndarray


def run_push_diging(g: DirectedGraph, objectives: Sequence[Objective], eta: float,
                    max_iter: int = 1000, tol: float = 1e-8, *,
                    facts: GraphFacts | None = None, reference: Reference | None = None,
                    divergence_threshold: float = 1e12,
                    observer: Callable[[int, PushDigingState], None] | None = None) -> Trace:
    """Gradient tracking with push-sum correction over a static column-stochastic ``C``.

    ``u(k+1) = C (u(k) - eta y(k))``, ``v(k+1) = C v(k)``, ``x = u / v`` and
    ``y(k+1) = C y(k) + grad f(x(k+1)) - grad f(x(k))``, started from
    ``u = x = 0``, ``v = 1``, ``y = grad f(0)``. ``observer(k, state)`` is
    called with the state after every round, including ``k = 0``.
    """
    if not eta > 0:
        raise InvalidInputError(f"eta must be positive, got {eta}")
    facts, reference = _prepare(g, objectives, facts, reference)
    if not facts.strongly_connected:
        raise InvalidTopologyError("Push-DIGing requires a strongly connected graph")
    if len(objectives) != g.n:
        raise InvalidInputError(f"{len(objectives)} objectives for {g.n} agents")
    d = objectives[0].dim
    C = column_stochastic_C(g)
    grads = local_gradients(objectives)
    x = np.zeros((g.n, d))
    G = grads(x)
    s = PushDigingState(u=x.copy(), v=np.ones(g.n), x=x, y_tracker=G.copy(), grad=G)
    meter = CostErrorMeter(sum_objectives(objectives), s.x, g.n * reference.f_star)
    trace = Trace("push_diging")

    def record(k, grads_total, scalars_total, active):
        trace.append(TraceRecord(
            round=k, relative_cost_error=meter(s.x), consensus_residual=consensus_residual(s.x),
            primal_gap=0.0, dual_sum_norm=float(np.linalg.norm(s.y_tracker.sum(axis=0))),
            gradient_evals=grads_total, broadcast_scalars=scalars_total, active_count=active,
        ))
        return trace.records[-1].relative_cost_error

    grads_total = scalars_total = 0
    record(0, 0, 0, 0)
    if observer is not None:
        observer(0, s)
    trace.status = "max_iterations"
    for k in range(max_iter):
        s.u = C @ (s.u - eta * s.y_tracker)
        s.v = C @ s.v
        if s.v.min() < 1e-300:
            raise NumericDegeneracyError("push-sum weight underflow", k + 1)
        s.x = s.u / s.v[:, None]
        G = grads(s.x)
        s.y_tracker = C @ s.y_tracker + G - s.grad
        s.grad = G
        if not np.all(np.isfinite(s.x)) or np.abs(s.x).max() > divergence_threshold:
            trace.status = "diverged"
            exc = DivergenceError("x diverged", k + 1)
            exc.trace = trace
            raise exc
        if observer is not None:
            observer(k + 1, s)
        dg, ds = cost_ledger_update("push_diging", d=d, active_count=g.n)
        grads_total += dg
        scalars_total += ds
        if record(k + 1, grads_total, scalars_total, g.n) <= tol:
            trace.status = "converged"
            break
    trace.x = s.x.copy()
    return trace


def exact_local_solve(obj: Objective, x0, y, z, rho: float, inner_tol: float,
                      max_inner: int) -> tuple[np.ndarray, int]:
    """Minimize ``f(x) + y.x + (rho/2)||x - z||^2`` by gradient descent with step ``1/(M + rho)``.

    Returns the minimizer and the number of gradient evaluations spent.
    """
    step = 1.0 / (obj.smoothness + rho)
    x = np.array(x0, dtype=float)
    for it in range(1, max_inner + 1):
        g = obj.gradient(x) + y + rho * (x - z)
        if np.linalg.norm(g) <= inner_tol:
            return x, it
        x = x - step * g
    raise InnerSolveError(f"local subproblem not solved to {inner_tol:g} in {max_inner} iterations")


def run_exact_admm(g: DirectedGraph, objectives: Sequence[Objective], rho: float, B: int = 1,
                   inner_tol: float = 1e-10, max_iter: int = 1000, tol: float = 1e-8, *,
                   q=1.0, seed: int = 0, max_inner: int = 1_000_000,
                   facts: GraphFacts | None = None, reference: Reference | None = None,
                   inner_hook: InnerHook | None = None, **config_overrides) -> Trace:
    """IPD's outer loop with the x-step replaced by an exact local minimization.

    Inner solves warm-start at the agent's current ``x``; every inner gradient
    evaluation is charged to the computation ledger.
    """
    if not inner_tol > 0:
        raise InvalidInputError(f"inner_tol must be positive, got {inner_tol}")
    facts, reference = _prepare(g, objectives, facts, reference)
    # eta is unused by the exact x-step but RunConfig requires a valid value
    config = RunConfig(eta=1.0, rho=rho, B=B, q=q, seed=seed, max_outer_iterations=max_iter,
                       stop_tolerance=tol, **config_overrides)
    eng = _Engine(g, objectives, config, facts, reference, "exact_admm", inner_hook)

    def x_step(act, x):
        s = eng.state
        out = x.copy()
        spent = 0
        for i in np.flatnonzero(act):
            out[i], used = exact_local_solve(objectives[i], x[i], s.y[i], s.z[i], rho, inner_tol, max_inner)
            spent += used
        return out, spent

    return eng.run(x_step)
