"""Directed communication graphs and the structural quantities the algorithms need.

Edges are ordered pairs ``(src, dst)``: ``src`` can send to ``dst``. Each agent
keeps the list of its in-neighbors, and each agent's out-degree is the number
of agents it broadcasts to.
"""

from __future__ import annotations

import io
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, TextIO

import numpy as np

from .errors import InvalidTopologyError, ParseError, ZeroOutDegreeError


@dataclass(frozen=True)
class DirectedGraph:
    n: int
    in_neighbors: tuple[tuple[int, ...], ...]
    out_degree: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        if self.n < 1:
            raise InvalidTopologyError(f"graph needs at least one agent, got n={self.n}")
        if len(self.in_neighbors) != self.n:
            raise InvalidTopologyError("in_neighbors must have one entry per agent")
        deg = [0] * self.n
        canon = []
        for i, srcs in enumerate(self.in_neighbors):
            srcs = tuple(sorted(int(j) for j in srcs))
            if len(set(srcs)) != len(srcs):
                raise InvalidTopologyError(f"duplicate edge into agent {i}")
            for j in srcs:
                if not 0 <= j < self.n:
                    raise InvalidTopologyError(f"agent id {j} outside [0, {self.n})")
                if j == i:
                    raise InvalidTopologyError(f"self-loop at agent {i}")
                deg[j] += 1
            canon.append(srcs)
        object.__setattr__(self, "in_neighbors", tuple(canon))
        object.__setattr__(self, "out_degree", tuple(deg))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> DirectedGraph:
        ins: list[list[int]] = [[] for _ in range(max(n, 0))]
        for src, dst in edges:
            if not (0 <= dst < n):
                raise InvalidTopologyError(f"agent id {dst} outside [0, {n})")
            ins[dst].append(src)
        return cls(n, tuple(tuple(s) for s in ins))

    @classmethod
    def cycle(cls, n: int) -> DirectedGraph:
        return ring_with_random_chords(n, 0.0, 0) if n >= 2 else cls(1, ((),))

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(j, i) for i, srcs in enumerate(self.in_neighbors) for j in srcs]

    @property
    def num_edges(self) -> int:
        return sum(self.out_degree)

    @cached_property
    def out_neighbors(self) -> tuple[tuple[int, ...], ...]:
        outs: list[list[int]] = [[] for _ in range(self.n)]
        for i, srcs in enumerate(self.in_neighbors):
            for j in srcs:
                outs[j].append(i)
        return tuple(tuple(o) for o in outs)

    @cached_property
    def adjacency(self) -> np.ndarray:
        """``A[i, j] = 1`` iff ``j`` sends to ``i``."""
        A = np.zeros((self.n, self.n))
        for i, srcs in enumerate(self.in_neighbors):
            A[i, list(srcs)] = 1.0
        A.flags.writeable = False
        return A

    @cached_property
    def degrees(self) -> np.ndarray:
        d = np.asarray(self.out_degree, dtype=float)
        d.flags.writeable = False
        return d


@dataclass(frozen=True)
class GraphFacts:
    d_max: int
    phi: int | None
    lambda2: float | None
    strongly_connected: bool


def ring_with_random_chords(n: int, p: float, seed: int) -> DirectedGraph:
    """Directed ring ``i -> i+1 (mod n)`` plus each other ordered pair with probability ``p``."""
    if n < 2:
        raise InvalidTopologyError(f"ring needs n >= 2, got {n}")
    if not 0.0 <= p <= 1.0:
        raise InvalidTopologyError(f"chord probability must lie in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    # one draw per ordered pair, row = src, so the stream does not depend on p
    draws = rng.random((n, n))
    edges = []
    for src in range(n):
        for dst in range(n):
            if src == dst:
                continue
            if dst == (src + 1) % n or draws[src, dst] < p:
                edges.append((src, dst))
    return DirectedGraph.from_edges(n, edges)


def _bfs(n: int, adj: tuple[tuple[int, ...], ...], source: int) -> list[int]:
    dist = [-1] * n
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def is_strongly_connected(g: DirectedGraph) -> bool:
    if g.n == 1:
        return True
    fwd = _bfs(g.n, g.out_neighbors, 0)
    bwd = _bfs(g.n, g.in_neighbors, 0)
    return min(fwd) >= 0 and min(bwd) >= 0


def diameter(g: DirectedGraph) -> int | None:
    """Longest shortest directed path in hops; ``None`` when some pair is unreachable."""
    best = 0
    for s in range(g.n):
        dist = _bfs(g.n, g.out_neighbors, s)
        if min(dist) < 0:
            return None
        best = max(best, max(dist))
    return best


def build_P(g: DirectedGraph) -> np.ndarray:
    """Lazy push matrix ``(I + A D^-1) / 2``; column stochastic."""
    if g.n == 1:
        return np.ones((1, 1))
    d = g.degrees
    if np.any(d == 0):
        zero = [i for i, di in enumerate(g.out_degree) if di == 0]
        raise ZeroOutDegreeError(f"agents with zero out-degree: {zero}")
    return 0.5 * (np.eye(g.n) + g.adjacency / d[None, :])


def second_eigenvalue_modulus(M: np.ndarray) -> float:
    # LAPACK geev: Hessenberg reduction followed by shifted QR
    mags = np.sort(np.abs(np.linalg.eigvals(M)))[::-1]
    return float(mags[1]) if len(mags) > 1 else 0.0


def analyze(g: DirectedGraph) -> GraphFacts:
    sc = is_strongly_connected(g)
    phi = diameter(g) if sc else None
    if g.n == 1:
        lam2 = 0.0
    elif min(g.out_degree) == 0:
        lam2 = None
    else:
        lam2 = second_eigenvalue_modulus(build_P(g))
    return GraphFacts(d_max=max(g.out_degree), phi=phi, lambda2=lam2, strongly_connected=sc)


def initial_weight_bound(facts: GraphFacts) -> float:
    """Largest admissible uniform initial balancing weight, ``d_max ** -(2 phi + 1)``."""
    if not facts.strongly_connected or facts.phi is None:
        raise InvalidTopologyError("initial weight bound requires a strongly connected graph")
    if facts.d_max == 0:
        return 1.0
    return float(facts.d_max) ** -(2 * facts.phi + 1)


def write_edge_list(g: DirectedGraph, stream: TextIO) -> None:
    stream.write(f"n {g.n}\n")
    for src, dst in sorted(g.edges):
        stream.write(f"{src} {dst}\n")


def dumps_edge_list(g: DirectedGraph) -> str:
    buf = io.StringIO()
    write_edge_list(g, buf)
    return buf.getvalue()


def read_edge_list(stream: TextIO) -> DirectedGraph:
    n = None
    edges = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if n is None:
            if len(parts) != 2 or parts[0] != "n":
                raise ParseError("expected header 'n <count>'", lineno)
            try:
                n = int(parts[1])
            except ValueError:
                raise ParseError(f"agent count is not an integer: {parts[1]!r}", lineno) from None
            continue
        if len(parts) != 2:
            raise ParseError(f"expected 'src dst', got {line!r}", lineno)
        try:
            src, dst = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"non-integer agent id in {line!r}", lineno) from None
        if not (0 <= src < n and 0 <= dst < n):
            raise ParseError(f"agent id out of range in {line!r}", lineno)
        edges.append((src, dst))
    if n is None:
        raise ParseError("empty edge list (missing 'n <count>' header)")
    try:
        return DirectedGraph.from_edges(n, edges)
    except InvalidTopologyError as exc:
        raise ParseError(str(exc)) from exc


def loads_edge_list(text: str) -> DirectedGraph:
    return read_edge_list(io.StringIO(text))

