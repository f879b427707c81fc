"""Local cost functions, datasets, and a centralized reference solver."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import InvalidInputError, ParseError

log = logging.getLogger(__name__)


def softplus(z):
    """``ln(1 + e^z)`` without overflow."""
    z = np.asarray(z, dtype=float)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def sigmoid(z):
    # tanh form is overflow-free for large |z|
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


class Objective:
    """Smooth convex cost on R^d.

    Subclasses provide ``value_batch`` (one value per row of a ``k x d`` array)
    and ``gradient``; ``smoothness`` and ``strong_convexity`` are the Lipschitz
    constant of the gradient and the strong convexity modulus.
    """

    dim: int
    smoothness: float
    strong_convexity: float

    def value(self, x) -> float:
        return float(self.value_batch(np.atleast_2d(np.asarray(x, dtype=float)))[0])

    def value_batch(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    @property
    def condition_number(self) -> float:
        return self.smoothness / self.strong_convexity if self.strong_convexity > 0 else math.inf


class QuadraticObjective(Objective):
    """``(curvature / 2) * ||x - center||^2 + offset``."""

    def __init__(self, center, curvature: float, offset: float = 0.0):
        if not curvature > 0:
            raise InvalidInputError(f"curvature must be positive, got {curvature}")
        self.center = np.array(center, dtype=float).reshape(-1)
        self.center.flags.writeable = False
        self.curvature = float(curvature)
        self.offset = float(offset)
        self.dim = self.center.size
        self.smoothness = self.strong_convexity = self.curvature

    def value_batch(self, points):
        diff = np.atleast_2d(points) - self.center
        return 0.5 * self.curvature * np.einsum("ij,ij->i", diff, diff) + self.offset

    def gradient(self, x):
        return self.curvature * (np.asarray(x, dtype=float) - self.center)

    def minimizer(self) -> np.ndarray:
        return self.center.copy()

    def __repr__(self):
        return f"QuadraticObjective(center={self.center.tolist()}, curvature={self.curvature})"


def quadratic_objective(center, curvature: float) -> QuadraticObjective:
    return QuadraticObjective(center, curvature)


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=float).reshape(-1)
        if X.ndim != 2:
            X = X.reshape(len(y), -1)
        if X.shape[0] != y.shape[0]:
            raise InvalidInputError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if y.size and not np.all((y == 0) | (y == 1)):
            raise InvalidInputError("labels must be 0 or 1")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def __len__(self):
        return self.features.shape[0]

    def subset(self, idx) -> Dataset:
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.features[idx], self.labels[idx])


class LogisticObjective(Objective):
    """Weighted logistic loss ``sum_j s_j [ln(1 + e^{w_j.x}) + (1 - y_j) w_j.x] + ridge/2 ||x||^2``.

    With the default weights ``s_j = 1/m`` this is the per-agent mean loss.
    """

    def __init__(self, data: Dataset, ridge: float = 1e-3, sample_weight=None):
        if len(data) == 0:
            raise InvalidInputError("logistic objective needs at least one sample")
        if ridge < 0:
            raise InvalidInputError(f"ridge must be nonnegative, got {ridge}")
        self.data = data
        self.ridge = float(ridge)
        m = len(data)
        if sample_weight is None:
            s = np.full(m, 1.0 / m)
        else:
            s = np.asarray(sample_weight, dtype=float).reshape(-1)
            if s.shape != (m,) or np.any(s < 0):
                raise InvalidInputError("sample_weight must be a nonnegative vector, one per sample")
        self.sample_weight = s
        X, y = data.features, data.labels
        self._X = X
        # gradient of the linear part is constant
        self._lin = X.T @ (s * (1.0 - y))
        self.dim = data.d
        # sigma' <= 1/4
        self.smoothness = 0.25 * float(s @ np.einsum("ij,ij->i", X, X)) + self.ridge
        self.strong_convexity = self.ridge

    def value_batch(self, points):
        P = np.atleast_2d(points)
        Z = self._X @ P.T
        vals = self.sample_weight @ softplus(Z) + P @ self._lin
        return vals + 0.5 * self.ridge * np.einsum("ij,ij->i", P, P)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        z = self._X @ x
        return self._X.T @ (self.sample_weight * sigmoid(z)) + self._lin + self.ridge * x


def logistic_objective(data: Dataset, ridge: float = 1e-3) -> LogisticObjective:
    return LogisticObjective(data, ridge)


class SumObjective(Objective):
    """Pointwise sum of objectives sharing a dimension."""

    def __init__(self, parts: Sequence[Objective]):
        if not parts:
            raise InvalidInputError("cannot sum an empty list of objectives")
        dims = {p.dim for p in parts}
        if len(dims) != 1:
            raise InvalidInputError(f"objectives disagree on dimension: {sorted(dims)}")
        self.parts = list(parts)
        self.dim = dims.pop()
        self.smoothness = sum(p.smoothness for p in parts)
        self.strong_convexity = sum(p.strong_convexity for p in parts)

    def value_batch(self, points):
        return sum(p.value_batch(points) for p in self.parts)

    def gradient(self, x):
        return sum(p.gradient(x) for p in self.parts)


def sum_objectives(objectives: Sequence[Objective]) -> Objective:
    """Global cost ``F(x) = sum_i f_i(x)``, merged into one closed-form object when possible."""
    objectives = list(objectives)
    if not objectives:
        raise InvalidInputError("no objectives given")
    dims = {o.dim for o in objectives}
    if len(dims) != 1:
        raise InvalidInputError(f"objectives disagree on dimension: {sorted(dims)}")
    if len(objectives) == 1:
        return objectives[0]
    if all(type(o) is QuadraticObjective for o in objectives):
        c = np.array([o.curvature for o in objectives])
        centers = np.stack([o.center for o in objectives])
        total = c.sum()
        center = (c[:, None] * centers).sum(0) / total
        merged = QuadraticObjective(center, total)
        # constant so that merged(x) == sum_i f_i(x)
        merged.offset = float(sum(o.value(center) for o in objectives))
        merged.smoothness = float(sum(o.smoothness for o in objectives))
        merged.strong_convexity = float(sum(o.strong_convexity for o in objectives))
        return merged
    if all(type(o) is LogisticObjective for o in objectives):
        data = Dataset(
            np.concatenate([o.data.features for o in objectives]),
            np.concatenate([o.data.labels for o in objectives]),
        )
        weights = np.concatenate([o.sample_weight for o in objectives])
        merged = LogisticObjective(data, sum(o.ridge for o in objectives), weights)
        merged.smoothness = float(sum(o.smoothness for o in objectives))
        return merged
    return SumObjective(objectives)


@dataclass(frozen=True)
class Partition:
    indices: tuple[np.ndarray, ...]

    def __len__(self):
        return len(self.indices)

    def sizes(self) -> list[int]:
        return [len(ix) for ix in self.indices]


def partition_uniform(data: Dataset, n: int, seed) -> Partition:
    if n < 1:
        raise InvalidInputError(f"agent count must be positive, got {n}")
    if len(data) < n:
        raise InvalidInputError(f"{len(data)} samples cannot cover {n} agents")
    perm = np.random.default_rng(seed).permutation(len(data))
    return Partition(tuple(np.sort(block) for block in np.array_split(perm, n)))


def agent_logistic_objectives(data: Dataset, partition: Partition, ridge: float) -> list[LogisticObjective]:
    return [LogisticObjective(data.subset(ix), ridge) for ix in partition.indices]


def _map_labels(raw: list[float]) -> np.ndarray:
    values = sorted(set(raw))
    if len(values) == 2:
        low = values[0]
        return np.array([0.0 if (v <= 0 or v == low) else 1.0 for v in raw])
    return np.array([0.0 if v <= 0 else 1.0 for v in raw])


def parse_libsvm(stream: TextIO | Iterable[str], n_features: int | None = None) -> Dataset:
    """Read ``label idx:val ...`` lines (1-based indices) into a dense binary-labelled dataset."""
    labels: list[float] = []
    rows: list[tuple[list[int], list[float]]] = []
    width = 0
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise ParseError(f"label is not numeric: {tokens[0]!r}", lineno) from None
        if not math.isfinite(label):
            raise ParseError(f"label is not finite: {tokens[0]!r}", lineno)
        idx, val = [], []
        for tok in tokens[1:]:
            key, sep, value = tok.partition(":")
            if not sep:
                raise ParseError(f"expected 'index:value', got {tok!r}", lineno)
            try:
                j = int(key)
                v = float(value)
            except ValueError:
                raise ParseError(f"non-numeric entry {tok!r}", lineno) from None
            if j < 1:
                raise ParseError(f"feature index must be >= 1, got {j}", lineno)
            if not math.isfinite(v):
                raise ParseError(f"non-finite value in {tok!r}", lineno)
            idx.append(j - 1)
            val.append(v)
            width = max(width, j)
        labels.append(label)
        rows.append((idx, val))
    if n_features is not None:
        if n_features < width:
            raise ParseError(f"feature index {width} exceeds declared width {n_features}")
        width = n_features
    X = np.zeros((len(rows), width))
    for r, (idx, val) in enumerate(rows):
        X[r, idx] = val
    return Dataset(X, _map_labels(labels) if labels else np.zeros(0))


def write_libsvm(data: Dataset, stream: TextIO) -> None:
    for x, y in zip(data.features, data.labels):
        entries = " ".join(f"{j + 1}:{v:.17g}" for j, v in enumerate(x) if v != 0.0)
        stream.write(f"{int(y)} {entries}".rstrip() + "\n")


def solve_centralized(objectives: Sequence[Objective], tol: float = 1e-10, max_iter: int = 2_000_000,
                      x0=None) -> tuple[np.ndarray, float]:
    """Minimize ``sum_i f_i`` by gradient descent with step ``1 / sum_i M_i``.

    Returns ``(x_star, F(x_star))``. Stops once ``||grad F|| <= tol``.
    """
    if not tol > 0:
        raise InvalidInputError(f"tol must be positive, got {tol}")
    F = sum_objectives(objectives)
    if F.strong_convexity <= 0:
        log.warning("sum of objectives is not strongly convex; gradient descent may stall")
    step = 1.0 / F.smoothness
    x = np.zeros(F.dim) if x0 is None else np.array(x0, dtype=float)
    for it in range(max_iter):
        g = F.gradient(x)
        if np.linalg.norm(g) <= tol:
            break
        x = x - step * g
    else:
        log.warning("solve_centralized hit max_iter=%d with ||grad|| = %.3e", max_iter, np.linalg.norm(g))
    return x, F.value(x)


def local_gradients(objectives: Sequence[Objective]):
    """Return ``grads(X, active)`` stacking ``grad f_i(X[i])`` for active rows (zeros elsewhere)."""
    objectives = list(objectives)
    if objectives and all(type(o) is QuadraticObjective for o in objectives):
        c = np.array([o.curvature for o in objectives])[:, None]
        centers = np.stack([o.center for o in objectives])

        def quad(X, active=None):
            G = c * (X - centers)
            return G if active is None else np.where(np.asarray(active)[:, None], G, 0.0)

        return quad

    def generic(X, active=None):
        G = np.zeros_like(X, dtype=float)
        for i, o in enumerate(objectives):
            if active is None or active[i]:
                G[i] = o.gradient(X[i])
        return G

    return generic


def synthetic_logistic_dataset(samples: int, d: int, seed) -> Dataset:
    """Standard normal features, labels ``Bernoulli(sigmoid(w_true . x))`` with a seeded ``w_true``."""
    if samples < 1 or d < 1:
        raise InvalidInputError(f"samples and d must be positive, got samples={samples}, d={d}")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((samples, d))
    w_true = rng.standard_normal(d)
    y = (rng.random(samples) < sigmoid(X @ w_true)).astype(float)
    return Dataset(X, y)


def random_centers(n: int, d: int, seed) -> np.ndarray:
    if n < 1 or d < 1:
        raise InvalidInputError(f"n and d must be positive, got n={n}, d={d}")
    return np.random.default_rng(seed).standard_normal((n, d))


def write_centers(centers, stream: TextIO) -> None:
    for row in np.atleast_2d(centers):
        stream.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def read_centers(stream: TextIO | Iterable[str]) -> np.ndarray:
    """One agent per line, whitespace-separated coordinates."""
    rows = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            row = [float(t) for t in line.split()]
        except ValueError:
            raise ParseError(f"non-numeric coordinate in {line!r}", lineno) from None
        if rows and len(row) != len(rows[0]):
            raise ParseError(f"expected {len(rows[0])} coordinates, got {len(row)}", lineno)
        if not all(math.isfinite(v) for v in row):
            raise ParseError("non-finite coordinate", lineno)
        rows.append(row)
    if not rows:
        raise ParseError("no centers found")
    return np.array(rows)
