"""Weight balancing and the column-stochastic mixing matrix it induces.

Each agent ``i`` holds a positive weight ``w_i``. The mixing matrix

    W = I - (D - A) diag(w)

is column stochastic for any ``w``; it is also row stochastic (doubly
stochastic) exactly when ``d_i w_i = sum_{j in N_in(i)} w_j`` for every ``i``.
The balancing recursion drives ``w`` towards such a point.

Two variants of the recursion are provided:

``"receiver"`` (default)
    ``w_i <- (w_i + (1/d_i) sum_{j in N_in(i)} w_j) / 2``. Its fixed points are
    exactly the balanced weights, and ``D w`` evolves by ``P`` so
    ``sum_i d_i w_i`` is conserved.
``"sender"``
    ``w <- P w``, i.e. ``w_i <- (w_i + sum_{j in N_in(i)} w_j / d_j) / 2``.
    Conserves ``sum_i w_i``; balanced only on out-degree-regular graphs.
"""

from __future__ import annotations

from typing import Literal

import numpy as np

from .errors import InvalidStateError, WeightTooLargeError
from .graph import DirectedGraph, build_P

BalanceVariant = Literal["receiver", "sender"]
VARIANTS = ("receiver", "sender")


def _check_positive(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise InvalidStateError("balancing weights must be finite and positive")
    return w


def balance_step(g: DirectedGraph, w, variant: BalanceVariant = "receiver") -> np.ndarray:
    w = _check_positive(w)
    if g.n == 1:
        return w.copy()
    build_P(g)  # raises on zero out-degree
    A, d = g.adjacency, g.degrees
    if variant == "receiver":
        return 0.5 * (w + (A @ w) / d)
    if variant == "sender":
        return 0.5 * (w + A @ (w / d))
    raise ValueError(f"unknown balancing variant {variant!r}; expected one of {VARIANTS}")


def conserved_quantity(g: DirectedGraph, w, variant: BalanceVariant = "receiver") -> float:
    """The scalar the chosen recursion keeps fixed."""
    w = np.asarray(w, dtype=float)
    return float(g.degrees @ w) if variant == "receiver" else float(w.sum())


def balance_residual(g: DirectedGraph, w) -> float:
    w = np.asarray(w, dtype=float)
    return float(np.linalg.norm(g.degrees * w - g.adjacency @ w))


def mixing_matrix(g: DirectedGraph, w, atol: float = 1e-12) -> np.ndarray:
    w = _check_positive(w)
    d = g.degrees
    over = d * w > 1.0 + atol
    if np.any(over):
        raise WeightTooLargeError(f"weights exceed 1/d_i at agents {np.flatnonzero(over).tolist()}")
    return np.eye(g.n) - (np.diag(d) - g.adjacency) * w[None, :]


def uniform_weights(g: DirectedGraph, value: float) -> np.ndarray:
    return np.full(g.n, float(value))


def max_admissible_weight(g: DirectedGraph, variant: BalanceVariant = "receiver",
                          tol: float = 1e-15, max_steps: int = 1_000_000) -> float:
    """Largest uniform initial weight ``c`` with ``d_i w_i(b) <= 1`` for all ``i`` and all ``b >= 0``.

    Both recursions are linear, so ``w(b)`` from ``w(0) = c 1`` is ``c`` times the
    trajectory from the all-ones vector; ``c`` is the reciprocal of that
    trajectory's peak ``max_i d_i w_i(b)``. The trajectory is followed until it
    settles to ``tol`` relative.
    """
    if g.n == 1:
        return 1.0
    w = np.ones(g.n)
    d = g.degrees
    peak = float((d * w).max())
    for _ in range(max_steps):
        nxt = balance_step(g, w, variant)
        peak = max(peak, float((d * nxt).max()))
        if np.abs(nxt - w).max() <= tol * np.abs(nxt).max():
            break
        w = nxt
    return 1.0 / peak
