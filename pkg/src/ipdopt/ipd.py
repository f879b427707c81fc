"""Inexact ADMM on directed graphs with weight-balanced averaging and partial participation.

One outer round ``k``:

1. draw the activation mask;
2. every active agent takes one gradient step on its augmented Lagrangian
   (``local_x_step``) and seeds its averaging variable ``xi`` with the result;
3. ``B`` synchronous inner rounds: active agents broadcast ``(w_i, xi_i)``,
   then update ``w`` by the balancing recursion and ``xi`` by the mixing
   matrix built from the pre-update weights;
4. active agents set ``z_i = xi_i`` and take the dual ascent step.

Inactive agents freeze all their state. Every broadcast is kept in the
receivers' buffers, so active agents keep mixing with the last value an
inactive neighbor transmitted.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Sequence

import numpy as np

from .balancing import BalanceVariant, balance_step, max_admissible_weight
from .errors import DivergenceError, InvalidInputError, InvalidTopologyError, WeightTooLargeError
from .graph import DirectedGraph, GraphFacts, analyze, initial_weight_bound
from .metrics import CostErrorMeter, Trace, TraceRecord, consensus_residual, cost_ledger_update
from .objectives import Objective, local_gradients, solve_centralized, sum_objectives

log = logging.getLogger(__name__)

InitialWeight = Literal["auto", "max_admissible", "edge_count", "diameter_bound"] | float
XiInit = Literal["primal", "primal_plus_dual"]


@dataclass(frozen=True)
class RunConfig:
    eta: float
    rho: float
    B: int = 1
    q: float | tuple[float, ...] = 1.0
    delta: float = 0.9
    seed: int = 0
    max_outer_iterations: int = 1000
    stop_tolerance: float = 1e-8
    # "max_admissible": largest uniform value keeping d_i w_i <= 1 along the balancing
    # trajectory; "auto": that value under full participation, half of it otherwise;
    # "edge_count": 1/|E|; "diameter_bound": d_max^-(2 phi + 1); or an explicit value
    initial_weight: InitialWeight = "auto"
    balance_variant: BalanceVariant = "receiver"
    xi_init: XiInit = "primal"
    divergence_threshold: float = 1e12

    def __post_init__(self):
        if not self.eta > 0:
            raise InvalidInputError(f"eta must be positive, got {self.eta}")
        if not self.rho > 0:
            raise InvalidInputError(f"rho must be positive, got {self.rho}")
        if int(self.B) != self.B or self.B < 1:
            raise InvalidInputError(f"B must be an integer >= 1, got {self.B}")
        qs = np.atleast_1d(np.asarray(self.q, dtype=float))
        if np.any(~((qs > 0) & (qs <= 1))):
            raise InvalidInputError(f"activation probabilities must lie in (0, 1], got {self.q}")
        if not 0 < self.delta < 1:
            raise InvalidInputError(f"delta must lie in (0, 1), got {self.delta}")
        if self.max_outer_iterations < 0:
            raise InvalidInputError("max_outer_iterations must be nonnegative")
        if self.xi_init not in ("primal", "primal_plus_dual"):
            raise InvalidInputError(f"unknown xi_init {self.xi_init!r}")
        if isinstance(self.initial_weight, str):
            if self.initial_weight not in ("auto", "max_admissible", "edge_count", "diameter_bound"):
                raise InvalidInputError(f"unknown initial_weight {self.initial_weight!r}")
        elif not self.initial_weight > 0:
            raise InvalidInputError("explicit initial_weight must be positive")

    def probabilities(self, n: int) -> np.ndarray:
        qs = np.atleast_1d(np.asarray(self.q, dtype=float))
        if qs.size == 1:
            return np.full(n, float(qs[0]))
        if qs.size != n:
            raise InvalidInputError(f"got {qs.size} activation probabilities for {n} agents")
        return qs

    @property
    def full_participation(self) -> bool:
        return bool(np.all(np.asarray(self.q) == 1.0))

    def with_(self, **changes) -> RunConfig:
        return replace(self, **changes)


def draw_activation(config: RunConfig, k: int, n: int) -> np.ndarray:
    """Bernoulli(q_i) activation mask for round ``k``; a pure function of ``(seed, k)``."""
    q = config.probabilities(n)
    rng = np.random.default_rng([int(config.seed), int(k)])
    return rng.random(n) < q


@dataclass(frozen=True)
class ActivationSchedule:
    config: RunConfig
    n: int

    def __getitem__(self, k: int) -> np.ndarray:
        return draw_activation(self.config, k, self.n)


@dataclass
class AgentState:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    w: float
    buffer: dict[int, tuple[float, np.ndarray]]


@dataclass
class IPDState:
    """Network-wide state, one row per agent.

    ``sent_w``/``sent_xi`` hold each agent's most recent broadcast. Every
    out-neighbor stores the same broadcast, so agent ``i``'s buffer slot for
    in-neighbor ``j`` is ``(sent_w[j], sent_xi[j])``.
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    w: np.ndarray
    xi: np.ndarray
    sent_w: np.ndarray
    sent_xi: np.ndarray

    @classmethod
    def initial(cls, n: int, d: int, w0: float) -> IPDState:
        zeros = np.zeros((n, d))
        return cls(x=zeros.copy(), y=zeros.copy(), z=zeros.copy(), w=np.full(n, w0),
                   xi=zeros.copy(), sent_w=np.full(n, w0), sent_xi=zeros.copy())

    def agent(self, g: DirectedGraph, i: int) -> AgentState:
        buf = {j: (float(self.sent_w[j]), self.sent_xi[j].copy()) for j in g.in_neighbors[i]}
        return AgentState(self.x[i].copy(), self.y[i].copy(), self.z[i].copy(), float(self.w[i]), buf)


def resolve_initial_weight(g: DirectedGraph, facts: GraphFacts, choice: InitialWeight,
                           variant: BalanceVariant = "receiver", full_participation: bool = True) -> float:
    if g.num_edges == 0:
        return 1.0
    if choice == "auto":
        # stale buffers can push a partial update past the full-participation peak
        return max_admissible_weight(g, variant) * (1.0 if full_participation else 0.5)
    if choice == "max_admissible":
        return max_admissible_weight(g, variant)
    if choice == "edge_count":
        # sum_i d_i w_i = 1 is conserved by the balancing recursion, which keeps d_i w_i <= 1
        return 1.0 / g.num_edges
    if choice == "diameter_bound":
        return initial_weight_bound(facts)
    return float(choice)


def buffered_balance_step(g: DirectedGraph, w, buffer_w, variant: BalanceVariant = "receiver") -> np.ndarray:
    """Balancing update for every agent using its own weight and buffered neighbor weights."""
    if g.n == 1:
        return np.array(w, dtype=float)
    w = np.asarray(w, dtype=float)
    bw = np.asarray(buffer_w, dtype=float)
    d = g.degrees
    if variant == "receiver":
        return 0.5 * (w + (g.adjacency @ bw) / d)
    if variant == "sender":
        return 0.5 * (w + g.adjacency @ (bw / d))
    raise InvalidInputError(f"unknown balancing variant {variant!r}")


def local_x_step(x, z, y, grad, eta: float, rho: float) -> np.ndarray:
    """One gradient step on ``f_i(x) + y.x + (rho/2)||x - z||^2``."""
    with np.errstate(over="ignore", invalid="ignore"):
        out = x - eta * (grad + y + rho * (x - z))
    if not np.all(np.isfinite(out)):
        raise DivergenceError("non-finite primal iterate")
    return out


def dual_step(y, x, z, rho: float) -> np.ndarray:
    return y + rho * (x - z)


def averaging_round(g: DirectedGraph, xi, w, active=None, buffer_w=None, buffer_xi=None,
                    atol: float = 1e-12) -> np.ndarray:
    """``xi_i <- (1 - d_i w_i) xi_i + sum_{j in N_in(i)} w_j xi_j`` for active ``i``.

    Neighbor values come from ``buffer_w``/``buffer_xi`` when given (last
    broadcasts), otherwise from the current ``w``/``xi``.
    """
    xi = np.asarray(xi, dtype=float)
    w = np.asarray(w, dtype=float)
    squeeze = xi.ndim == 1
    if squeeze:
        xi = xi[:, None]
    d = g.degrees
    act = np.ones(g.n, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    over = act & (d * w > 1.0 + atol)
    if np.any(over):
        raise WeightTooLargeError(f"weights exceed 1/d_i at agents {np.flatnonzero(over).tolist()}")
    bw = w if buffer_w is None else np.asarray(buffer_w, dtype=float)
    bx = xi if buffer_xi is None else np.asarray(buffer_xi, dtype=float).reshape(xi.shape)
    mixed = (1.0 - d * w)[:, None] * xi + g.adjacency @ (bw[:, None] * bx)
    out = mixed if active is None else np.where(act[:, None], mixed, xi)
    return out[:, 0] if squeeze else out


@dataclass(frozen=True)
class Reference:
    x_star: np.ndarray
    f_star: float


def reference_solution(objectives: Sequence[Objective], tol: float = 1e-10) -> Reference:
    x, f = solve_centralized(objectives, tol)
    return Reference(x, f)


InnerHook = Callable[[int, int, np.ndarray, np.ndarray], None]
XStep = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, int]]


@dataclass
class _Engine:
    """Shared outer loop for IPD and the exact-local-step ADMM baseline."""

    g: DirectedGraph
    objectives: Sequence[Objective]
    config: RunConfig
    facts: GraphFacts
    reference: Reference
    method: str
    inner_hook: InnerHook | None = None
    state: IPDState = field(init=False)

    def __post_init__(self):
        if not self.facts.strongly_connected:
            raise InvalidTopologyError("IPD requires a strongly connected graph")
        if len(self.objectives) != self.g.n:
            raise InvalidInputError(f"{len(self.objectives)} objectives for {self.g.n} agents")
        dims = {o.dim for o in self.objectives}
        if len(dims) != 1:
            raise InvalidInputError(f"objectives disagree on dimension: {sorted(dims)}")
        self.d = dims.pop()
        self.config.probabilities(self.g.n)
        w0 = resolve_initial_weight(self.g, self.facts, self.config.initial_weight,
                                    self.config.balance_variant, self.config.full_participation)
        self.state = IPDState.initial(self.g.n, self.d, w0)
        self.grads = local_gradients(self.objectives)
        F = sum_objectives(self.objectives)
        self.meter = CostErrorMeter(F, self.state.x, self.g.n * self.reference.f_star)

    def _record(self, trace: Trace, k: int, grads: int, scalars: int, active: int) -> float:
        s = self.state
        err = self.meter(s.x)
        trace.append(TraceRecord(
            round=k, relative_cost_error=err, consensus_residual=consensus_residual(s.x),
            primal_gap=float(np.linalg.norm(s.x - s.z)),
            dual_sum_norm=float(np.linalg.norm(s.y.sum(axis=0))),
            gradient_evals=grads, broadcast_scalars=scalars, active_count=active,
        ))
        return err

    def _check(self, k: int) -> None:
        s = self.state
        for name in ("x", "y", "z", "xi"):
            a = getattr(s, name)
            if not np.all(np.isfinite(a)) or np.abs(a).max(initial=0.0) > self.config.divergence_threshold:
                raise DivergenceError(f"{name} diverged", k)

    def _average(self, k: int, act: np.ndarray, full: bool) -> None:
        s, cfg, g = self.state, self.config, self.g
        if self.inner_hook is not None:
            self.inner_hook(k, 0, s.xi, act)
        for b in range(cfg.B):
            if full:
                s.sent_w[:] = s.w
                s.sent_xi[:] = s.xi
                new_w = balance_step(g, s.sent_w, cfg.balance_variant)
                s.xi = averaging_round(g, s.xi, s.w)
                s.w = new_w
            else:
                s.sent_w[act] = s.w[act]
                s.sent_xi[act] = s.xi[act]
                new_w = buffered_balance_step(g, s.w, s.sent_w, cfg.balance_variant)
                s.xi = averaging_round(g, s.xi, s.w, act, s.sent_w, s.sent_xi)
                s.w = np.where(act, new_w, s.w)
            if self.inner_hook is not None:
                self.inner_hook(k, b + 1, s.xi, act)

    def run(self, x_step: XStep) -> Trace:
        cfg, g, s = self.config, self.g, self.state
        trace = Trace(self.method)
        grads_total = scalars_total = 0
        self._record(trace, 0, 0, 0, 0)
        full_q = cfg.full_participation
        try:
            for k in range(cfg.max_outer_iterations):
                act = np.ones(g.n, dtype=bool) if full_q else draw_activation(cfg, k, g.n)
                n_act = int(act.sum())
                full = full_q
                if n_act:
                    x_new, spent = x_step(act, s.x)
                    if not np.all(np.isfinite(x_new[act])):
                        raise DivergenceError("non-finite primal iterate", k + 1)
                    s.x = np.where(act[:, None], x_new, s.x) if not full else x_new
                    seed = s.x if cfg.xi_init == "primal" else s.x + s.y / cfg.rho
                    s.xi = np.where(act[:, None], seed, s.xi) if not full else seed.copy()
                    self._average(k, act, full)
                    s.z = np.where(act[:, None], s.xi, s.z) if not full else s.xi.copy()
                    y_new = dual_step(s.y, s.x, s.z, cfg.rho)
                    s.y = np.where(act[:, None], y_new, s.y) if not full else y_new
                else:
                    spent = 0
                dg, ds = cost_ledger_update(self.method, d=self.d, active_count=n_act, B=cfg.B,
                                            inner_gradient_evals=spent)
                grads_total += dg
                scalars_total += ds
                self._check(k + 1)
                err = self._record(trace, k + 1, grads_total, scalars_total, n_act)
                if err <= cfg.stop_tolerance:
                    trace.status = "converged"
                    break
            else:
                trace.status = "max_iterations"
        except DivergenceError as exc:
            if exc.round_index is None:
                exc = DivergenceError(str(exc), len(trace.records))
            trace.status = "diverged"
            trace.message = str(exc)
            trace.x = s.x.copy()
            exc.trace = trace
            raise exc
        trace.x = s.x.copy()
        return trace


def _prepare(g, objectives, facts, reference):
    facts = analyze(g) if facts is None else facts
    reference = reference_solution(objectives) if reference is None else reference
    return facts, reference


def run_ipd(g: DirectedGraph, objectives: Sequence[Objective], config: RunConfig, *,
            facts: GraphFacts | None = None, reference: Reference | None = None,
            inner_hook: InnerHook | None = None) -> Trace:
    """Run IPD until the relative cost error reaches ``config.stop_tolerance``.

    ``reference`` (the centralized optimum) is computed when not supplied.
    ``inner_hook(k, b, xi, active)`` sees ``xi(b)`` for ``b = 0..B`` in every round
    that has an active agent; ``b = 0`` is the freshly seeded value.
    Raises ``DivergenceError`` (carrying the partial trace as ``.trace``) on blow-up.
    """
    facts, reference = _prepare(g, objectives, facts, reference)
    eng = _Engine(g, objectives, config, facts, reference, "ipd", inner_hook)
    cfg = config

    def x_step(act, x):
        G = eng.grads(x, act)
        s = eng.state
        return local_x_step(x, s.z, s.y, G, cfg.eta, cfg.rho), int(act.sum())

    return eng.run(x_step)
