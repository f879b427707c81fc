import numpy as np
import pytest

from ipdopt import DirectedGraph, balance_residual, balance_step, conserved_quantity, mixing_matrix, ring_with_random_chords
from ipdopt.balancing import max_admissible_weight, uniform_weights
from ipdopt.errors import InvalidStateError, WeightTooLargeError, ZeroOutDegreeError


def test_receiver_step_by_hand():
    # 0 -> 1, 0 -> 2, 1 -> 2, 2 -> 0; out-degrees (2, 1, 1)
    g = DirectedGraph.from_edges(3, [(0, 1), (0, 2), (1, 2), (2, 0)])
    w = np.array([0.1, 0.2, 0.3])
    expected = [0.5 * (0.1 + 0.3 / 2), 0.5 * (0.2 + 0.1 / 1), 0.5 * (0.3 + (0.1 + 0.2) / 1)]
    np.testing.assert_allclose(balance_step(g, w), expected, rtol=1e-15)


def test_sender_step_is_P_times_w():
    from ipdopt import build_P
    g = ring_with_random_chords(8, 0.3, 0)
    w = np.linspace(0.01, 0.05, 8)
    np.testing.assert_allclose(balance_step(g, w, "sender"), build_P(g) @ w, rtol=1e-14)


def test_regular_graph_uniform_weights_are_fixed():
    g = DirectedGraph.cycle(5)
    w = uniform_weights(g, 0.3)
    np.testing.assert_array_equal(balance_step(g, w), w)
    assert balance_residual(g, w) == 0.0


@pytest.mark.parametrize("variant", ["receiver", "sender"])
def test_conserved_quantity(variant):
    g = ring_with_random_chords(12, 0.25, 1)
    w = np.random.default_rng(0).uniform(0.01, 0.05, 12)
    before = conserved_quantity(g, w, variant)
    for _ in range(50):
        w = balance_step(g, w, variant)
    assert conserved_quantity(g, w, variant) == pytest.approx(before, rel=1e-13)


def test_receiver_converges_to_balanced_weights():
    g = ring_with_random_chords(20, 0.2, 2)
    w = uniform_weights(g, 1.0 / g.num_edges)
    for _ in range(500):
        w = balance_step(g, w)
    assert balance_residual(g, w) < 1e-14
    W = mixing_matrix(g, w)
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)


def test_sender_variant_does_not_balance_irregular_graphs():
    g = ring_with_random_chords(20, 0.2, 2)
    w = uniform_weights(g, 1.0 / g.num_edges)
    for _ in range(500):
        w = balance_step(g, w, "sender")
    assert balance_residual(g, w) > 1e-4 * np.linalg.norm(g.degrees * w)


def test_mixing_matrix_three_cycle():
    g = DirectedGraph.from_edges(3, [(0, 1), (1, 2), (2, 0)])
    W = mixing_matrix(g, np.full(3, 0.25))
    np.testing.assert_allclose(W @ [1.0, 2.0, 3.0], [1.5, 1.75, 2.75])
    np.testing.assert_allclose(W.sum(axis=0), 1.0)


def test_mixing_matrix_column_stochastic_for_any_weights():
    g = ring_with_random_chords(9, 0.4, 5)
    w = np.random.default_rng(1).uniform(0.0, 1.0, 9) / g.degrees
    np.testing.assert_allclose(mixing_matrix(g, w).sum(axis=0), 1.0, atol=1e-15)


def test_mixing_matrix_rejects_large_weights():
    g = DirectedGraph.cycle(4)
    with pytest.raises(WeightTooLargeError):
        mixing_matrix(g, np.full(4, 1.5))


@pytest.mark.parametrize("bad", [[0.1, -0.1, 0.1], [0.1, np.nan, 0.1], [0.0, 0.1, 0.1]])
def test_nonpositive_weights_rejected(bad):
    with pytest.raises(InvalidStateError):
        balance_step(DirectedGraph.cycle(3), bad)


def test_zero_out_degree_rejected():
    with pytest.raises(ZeroOutDegreeError):
        balance_step(DirectedGraph.from_edges(2, [(0, 1)]), [0.1, 0.1])


@pytest.mark.parametrize("variant", ["receiver", "sender"])
def test_max_admissible_weight_is_tight(variant):
    g = ring_with_random_chords(15, 0.2, 3)
    c = max_admissible_weight(g, variant)
    w = uniform_weights(g, c)
    peak = 0.0
    for _ in range(2000):
        peak = max(peak, float((g.degrees * w).max()))
        w = balance_step(g, w, variant)
    assert peak <= 1.0 + 1e-12
    assert peak == pytest.approx(1.0, abs=1e-9)


def test_max_admissible_weight_regular_graph():
    assert max_admissible_weight(DirectedGraph.cycle(5)) == 1.0
    assert max_admissible_weight(DirectedGraph.cycle(1)) == 1.0
