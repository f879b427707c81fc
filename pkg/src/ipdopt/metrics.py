"""Convergence metrics, cost accounting, rate fitting and parameter certificates."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, field, fields
from typing import Literal, Sequence

import numpy as np

from .errors import CertificateInfeasibleError, DegenerateStartError, InvalidInputError
from .objectives import Objective, sum_objectives

Method = Literal["ipd", "push_diging", "exact_admm"]
METHODS = ("ipd", "push_diging", "exact_admm")


@dataclass(frozen=True)
class TraceRecord:
    round: int
    relative_cost_error: float
    consensus_residual: float
    primal_gap: float
    dual_sum_norm: float
    gradient_evals: int
    broadcast_scalars: int
    active_count: int

    @classmethod
    def header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> tuple:
        return astuple(self)


@dataclass
class Trace:
    method: str
    records: list[TraceRecord] = field(default_factory=list)
    x: np.ndarray | None = None
    status: str = "running"
    message: str = ""

    def __len__(self):
        return len(self.records)

    def append(self, rec: TraceRecord) -> None:
        if self.records:
            last = self.records[-1]
            assert rec.gradient_evals >= last.gradient_evals
            assert rec.broadcast_scalars >= last.broadcast_scalars
        self.records.append(rec)

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.relative_cost_error for r in self.records])

    @property
    def final(self) -> TraceRecord:
        return self.records[-1]

    def first_reaching(self, tol: float) -> TraceRecord | None:
        for r in self.records:
            if r.relative_cost_error <= tol:
                return r
        return None

    def rounds_to(self, tol: float) -> int | None:
        r = self.first_reaching(tol)
        return None if r is None else r.round


class CostErrorMeter:
    """Relative cost error against a fixed reference.

    ``sum_i F(x_i)`` is compared to ``f_star_sum`` (``n * F(x_star)``) and
    normalized by the same gap at the starting iterate ``x0``.
    """

    def __init__(self, objectives: Sequence[Objective] | Objective, x0: np.ndarray, f_star_sum: float):
        self.F = objectives if isinstance(objectives, Objective) else sum_objectives(objectives)
        self.f_star_sum = float(f_star_sum)
        self.denominator = float(self.F.value_batch(np.atleast_2d(x0)).sum()) - self.f_star_sum
        if not self.denominator > 0:
            raise DegenerateStartError("starting point already optimal; relative cost error undefined")

    def __call__(self, x: np.ndarray) -> float:
        return (float(self.F.value_batch(np.atleast_2d(x)).sum()) - self.f_star_sum) / self.denominator


def relative_cost_error(x, objectives, x0, f_star_sum: float) -> float:
    return CostErrorMeter(objectives, x0, f_star_sum)(x)


def consensus_residual(x) -> float:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return float(np.linalg.norm(x - x.mean(axis=0, keepdims=True)))


def cost_ledger_update(method: Method, *, d: int, active_count: int, B: int = 1,
                       inner_gradient_evals: int | None = None) -> tuple[int, int]:
    """Gradient evaluations and broadcast scalars spent in one round."""
    if method == "ipd":
        return active_count, active_count * B * (d + 1)
    if method == "push_diging":
        return active_count, active_count * (2 * d + 1)
    if method == "exact_admm":
        if inner_gradient_evals is None:
            raise InvalidInputError("exact_admm accounting needs the inner gradient count")
        return inner_gradient_evals, active_count * B * (d + 1)
    raise InvalidInputError(f"unknown method {method!r}")


@dataclass(frozen=True)
class RateFit:
    rate: float
    r_squared: float
    slope: float
    n_points: int


def fit_geometric_rate(series, window: tuple[int, int] | None = None, burn_in: float = 0.2) -> RateFit:
    """Least-squares fit of ``log(series[k]) ~ a + k log(rate)``.

    ``window`` is a half-open index range; without one, the first ``burn_in``
    fraction of the series is discarded.
    """
    s = np.asarray(series, dtype=float)
    if window is None:
        start, stop = int(math.floor(burn_in * len(s))), len(s)
    else:
        start, stop = window
    seg = s[start:stop]
    if len(seg) < 10:
        raise InvalidInputError(f"need at least 10 points to fit a rate, got {len(seg)}")
    if np.any(~(seg > 0)):
        raise InvalidInputError("rate fit needs strictly positive values")
    k = np.arange(start, start + len(seg), dtype=float)
    logs = np.log(seg)
    slope, intercept = np.polyfit(k, logs, 1)
    resid = logs - (slope * k + intercept)
    ss_tot = float(((logs - logs.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float((resid ** 2).sum()) / ss_tot
    return RateFit(rate=float(math.exp(slope)), r_squared=r2, slope=float(slope), n_points=len(seg))


# ---------------------------------------------------------------------------
# Parameter derivation and rate certificates

@dataclass(frozen=True)
class RateCertificate:
    mode: str
    m_f: float
    M_f: float
    delta: float
    eta: float
    rho: float
    B_min: int
    B_formula: float
    c1: float
    c2: float
    c3: float
    mu1: float
    mu1_proof: float
    lam: float
    lam_proof: float
    kappa: float
    lambda2: float | None = None

    def partial_rate(self, q_min: float) -> float:
        """Partial-participation rate bound for minimum activation probability ``q_min``."""
        if not 0 < q_min <= 1:
            raise InvalidInputError(f"q_min must lie in (0, 1], got {q_min}")
        lam = 1.0 - q_min * (1.0 - self.mu1) / (1.0 + self.mu1)
        return max(lam, self.lambda2) if self.lambda2 is not None else lam

    def as_rows(self) -> list[tuple[str, float | int | str | None]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


def theorem_inequalities(m_f: float, M_f: float, delta: float, B: int, eta: float, rho: float,
                         gamma: float = 4.0, tau: float | None = None,
                         zeta: float | None = None) -> dict[str, tuple[float, bool]]:
    """Left-hand sides of the four sufficient conditions for linear convergence.

    Keys ``13a``..``13d``; each value is ``(lhs, satisfied)``. Defaults for the
    free constants are ``gamma = 4``, ``tau = 3 (M_f + m_f) / 4`` and
    ``zeta = 3 (M_f + m_f)``.
    """
    s = m_f + M_f
    tau = 0.75 * s if tau is None else tau
    zeta = 3.0 * s if zeta is None else zeta
    dp = delta ** (2 * B - 1)
    h = m_f * M_f / s
    a = 1 / (4 * tau) + 1 / zeta - 1 / s
    b = tau + rho + 1 / (gamma * eta) - 1 / (2 * eta)
    c = 1 / (2 * eta) - (dp * (5 * rho / 4 + gamma / (4 * eta) + zeta / 4) + rho)
    d = dp * (17 * rho / 4 + gamma / (4 * eta) + zeta / 4) + 3 * rho - h
    return {"13a": (a, a < 0), "13b": (b, b < 0), "13c": (c, c > 0), "13d": (d, d < 0)}


def _constants(m_f, M_f, delta, B, eta, rho):
    s = m_f + M_f
    dp = delta ** (2 * B - 1)
    h = m_f * M_f / s
    c1 = 1 / (2 * eta) + 2 * rho + 3 * rho * dp - h
    c2 = 1 / (2 * eta) - dp * (5 * rho / 4 + 1 / eta + 3 * s / 4) - rho
    c3 = min(1 / (3 * s), eta ** 2 * (3 * s / 16 - rho), (c2 - c1) / (rho ** 2 * (4 + 4 * dp)))
    return c1, c2, c3


def _theorem_B_formula(m_f, M_f, delta) -> float:
    s = m_f + M_f
    t2 = 0.5 * (math.log(5 / 36) / math.log(delta) + 1)
    t3 = 0.5 * (math.log(8 * M_f * m_f / (9 * s ** 2)) / math.log(delta) + 1)
    return max(1.0, t2, t3)


def _corollary_B_formula(m_f, M_f, delta) -> float:
    kappa = M_f / m_f
    return 0.5 + math.log(1000 * (kappa + 1)) / (2 * math.log(1 / delta))


def derive_parameters(m_f: float, M_f: float, delta: float,
                      mode: Literal["theorem", "corollary"] = "corollary",
                      lambda2: float | None = None, B: int | None = None,
                      max_B: int = 100_000) -> RateCertificate:
    """Stepsize, penalty, inner-round count and rate certificate for full participation.

    ``eta = 4 / (15 (M_f + m_f))`` and ``rho = (2/87) M_f m_f / (M_f + m_f)`` in
    both modes. In corollary mode ``B_min`` is the smallest integer strictly
    above the corollary bound. In theorem mode it is the theorem's bound rounded
    up, then increased until conditions 13a-13d all hold (the stated bound alone
    does not guarantee 13d). Passing ``B`` certifies that value instead.
    """
    if not (0 < m_f <= M_f):
        raise InvalidInputError(f"need 0 < m_f <= M_f, got m_f={m_f}, M_f={M_f}")
    if not (0 < delta < 1):
        raise InvalidInputError(f"delta must lie in (0, 1), got {delta}")
    if mode not in ("theorem", "corollary"):
        raise InvalidInputError(f"mode must be 'theorem' or 'corollary', got {mode!r}")
    s = m_f + M_f
    eta = 4 / (15 * s)
    rho = (2 / 87) * M_f * m_f / s
    if mode == "theorem":
        formula = _theorem_B_formula(m_f, M_f, delta)
        B_min = max(1, math.ceil(formula))
        while not all(ok for _, ok in theorem_inequalities(m_f, M_f, delta, B_min, eta, rho).values()):
            B_min += 1
            if B_min > max_B:
                raise CertificateInfeasibleError("no B up to max_B satisfies 13a-13d")
    else:
        formula = _corollary_B_formula(m_f, M_f, delta)
        B_min = math.floor(formula) + 1
    B_used = B_min if B is None else int(B)
    if B_used < 1:
        raise InvalidInputError(f"B must be >= 1, got {B_used}")

    checks = theorem_inequalities(m_f, M_f, delta, B_used, eta, rho)
    c1, c2, c3 = _constants(m_f, M_f, delta, B_used, eta, rho)
    if c2 <= c1:
        failed = tuple(k for k, (_, ok) in checks.items() if not ok)
        raise CertificateInfeasibleError(
            f"c2 <= c1 (c1={c1:.6g}, c2={c2:.6g}) at B={B_used}, delta={delta}; "
            f"failing conditions: {', '.join(failed) or 'none'}", failed)
    mu1 = max((c1 + c2) / (2 * c2), 1 - (2 / 3) * rho * c3)
    mu1_proof = max((c1 + c2) / (2 * c2), 1 - 2 * rho * c3)
    lam = 2 * mu1 / (1 + mu1)
    lam_proof = 2 * mu1_proof / (1 + mu1_proof)
    if lambda2 is not None:
        lam, lam_proof = max(lam, lambda2), max(lam_proof, lambda2)
    return RateCertificate(
        mode=mode, m_f=m_f, M_f=M_f, delta=delta, eta=eta, rho=rho, B_min=B_used, B_formula=formula,
        c1=c1, c2=c2, c3=c3, mu1=mu1, mu1_proof=mu1_proof, lam=lam, lam_proof=lam_proof,
        kappa=M_f / m_f, lambda2=lambda2,
    )
