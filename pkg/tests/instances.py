"""Shared problem instances for the test suite."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ipdopt import (QuadraticObjective, agent_logistic_objectives, analyze, partition_uniform,
                    reference_solution, ring_with_random_chords)
from ipdopt.objectives import random_centers, synthetic_logistic_dataset

QUAD_N, QUAD_D = 10, 5


@lru_cache(maxsize=None)
def quadratic_instance(n: int = QUAD_N, d: int = QUAD_D, graph_seed: int = 0, data_seed: int = 1):
    """Ring-plus-chords graph with unit-curvature quadratics centered at standard normal draws."""
    g = ring_with_random_chords(n, 0.2, graph_seed)
    objs = [QuadraticObjective(c, 1.0) for c in random_centers(n, d, data_seed)]
    return g, analyze(g), objs, reference_solution(objs, 1e-13)


@lru_cache(maxsize=None)
def logistic_instance(n: int = 50, d: int = 22, samples: int = 5000, seed: int = 0):
    data = synthetic_logistic_dataset(samples, d, seed)
    objs = agent_logistic_objectives(data, partition_uniform(data, n, seed), 1e-3)
    g = ring_with_random_chords(n, 0.2, seed)
    return g, analyze(g), objs, reference_solution(objs, 1e-9)


def small_logistic(n: int = 4, d: int = 3, samples: int = 40, seed: int = 0):
    data = synthetic_logistic_dataset(samples, d, seed)
    return agent_logistic_objectives(data, partition_uniform(data, n, seed), 1e-2)


def three_cycle():
    from ipdopt import DirectedGraph
    return DirectedGraph.from_edges(3, [(0, 1), (1, 2), (2, 0)])


