import numpy as np
import pytest

from ipdopt import DirectedGraph, QuadraticObjective, RunConfig, fit_geometric_rate, ring_with_random_chords, run_ipd
from ipdopt.baselines import column_stochastic_C, exact_local_solve, run_exact_admm, run_push_diging
from ipdopt.errors import InnerSolveError, InvalidInputError, InvalidTopologyError
from ipdopt.objectives import local_gradients
from instances import quadratic_instance, small_logistic


def test_C_examples():
    np.testing.assert_array_equal(column_stochastic_C(DirectedGraph.cycle(2)), [[0.5, 0.5], [0.5, 0.5]])
    np.testing.assert_array_equal(column_stochastic_C(DirectedGraph.cycle(1)), [[1.0]])
    g = ring_with_random_chords(15, 0.3, 2)
    C = column_stochastic_C(g)
    np.testing.assert_allclose(C.sum(axis=0), 1.0, atol=1e-15)
    assert np.all((C > 0) == ((g.adjacency + np.eye(15)) > 0))


def naive_push_diging(g, objs, eta, rounds):
    C = column_stochastic_C(g)
    grads = local_gradients(objs)
    u = np.zeros((g.n, objs[0].dim))
    v = np.ones(g.n)
    x = u.copy()
    y = grads(x)
    history = [(x.copy(), y.copy(), v.copy())]
    for _ in range(rounds):
        u_new = np.zeros_like(u)
        v_new = np.zeros_like(v)
        y_new = np.zeros_like(y)
        for i in range(g.n):
            for j in (i, *g.in_neighbors[i]):
                u_new[i] += C[i, j] * (u[j] - eta * y[j])
                v_new[i] += C[i, j] * v[j]
                y_new[i] += C[i, j] * y[j]
        x_new = u_new / v_new[:, None]
        y_new += grads(x_new) - grads(x)
        u, v, x, y = u_new, v_new, x_new, y_new
        history.append((x.copy(), y.copy(), v.copy()))
    return history


def test_push_diging_matches_per_agent_recursion():
    g = ring_with_random_chords(6, 0.3, 1)
    objs = small_logistic(n=6, d=2, samples=60, seed=2)
    hist = naive_push_diging(g, objs, 0.2, 30)
    trace = run_push_diging(g, objs, 0.2, max_iter=30, tol=0.0)
    np.testing.assert_allclose(trace.x, hist[-1][0], rtol=1e-12, atol=1e-14)


def test_push_diging_tracker_and_mass_invariants():
    g, facts, objs, ref = quadratic_instance()
    for x, y, v in naive_push_diging(g, objs, 0.05, 200):
        grad_sum = local_gradients(objs)(x).sum(axis=0)
        np.testing.assert_allclose(y.sum(axis=0), grad_sum, atol=1e-10)
        assert v.sum() == pytest.approx(g.n, abs=1e-10)
        assert v.min() > 0


def test_push_diging_single_agent_is_gradient_descent():
    f = QuadraticObjective([1.5, -2.0], 2.0)
    trace = run_push_diging(DirectedGraph.cycle(1), [f], 0.2, max_iter=50, tol=0.0)
    x = np.zeros(2)
    for _ in range(50):
        x = x - 0.2 * f.gradient(x)
    np.testing.assert_allclose(trace.x[0], x, atol=1e-12)


def test_push_diging_converges_linearly_on_quadratics():
    g, facts, objs, ref = quadratic_instance()
    trace = run_push_diging(g, objs, 0.05, max_iter=3000, tol=1e-12, facts=facts, reference=ref)
    assert trace.status == "converged"
    assert fit_geometric_rate(trace.errors).r_squared >= 0.99
    assert trace.final.broadcast_scalars == trace.final.round * g.n * (2 * objs[0].dim + 1)
    assert trace.final.gradient_evals == trace.final.round * g.n


def test_push_diging_validation():
    objs = [QuadraticObjective([0.0], 1.0)] * 2
    with pytest.raises(InvalidInputError):
        run_push_diging(DirectedGraph.cycle(2), objs, 0.0)
    with pytest.raises(InvalidTopologyError):
        run_push_diging(DirectedGraph.from_edges(2, [(0, 1)]), objs, 0.1)


def test_exact_local_solve_matches_closed_form():
    c, k, rho = np.array([1.0, -2.0, 0.5]), 3.0, 0.7
    y, z = np.array([0.2, 0.1, -0.4]), np.array([0.0, 1.0, 2.0])
    x, used = exact_local_solve(QuadraticObjective(c, k), np.zeros(3), y, z, rho, 1e-12, 10_000)
    np.testing.assert_allclose(x, (k * c - y + rho * z) / (k + rho), atol=1e-12)
    assert used >= 1
    # one step of size 1/(M + rho) is exact on a quadratic
    assert exact_local_solve(QuadraticObjective(c, k), np.zeros(3), y, z, rho, 1e-12, 10_000)[1] == 2
    f = small_logistic(n=1, d=3, samples=30)[0]
    with pytest.raises(InnerSolveError):
        exact_local_solve(f, np.zeros(3), y, z, rho, 1e-12, 3)


def test_exact_admm_spends_more_gradients_per_round_than_ipd():
    g, facts, objs, ref = quadratic_instance()
    trace = run_exact_admm(g, objs, rho=0.5, B=5, inner_tol=1e-8, max_iter=30, tol=0.0, facts=facts, reference=ref)
    evals = np.diff([r.gradient_evals for r in trace.records])
    assert np.all(evals >= g.n)
    assert trace.final.broadcast_scalars == 30 * g.n * 5 * (objs[0].dim + 1)


def test_exact_admm_cost_error_is_eventually_monotone():
    g, facts, objs, ref = quadratic_instance()
    trace = run_exact_admm(g, objs, rho=0.5, B=30, inner_tol=1e-12, max_iter=200, tol=1e-10,
                           facts=facts, reference=ref)
    errs = trace.errors
    tail = errs[len(errs) // 5:]
    assert np.all(np.diff(tail) <= 1e-12 * tail[:-1] + 1e-15)
    assert trace.final.relative_cost_error < errs[len(errs) // 5]


def test_exact_admm_and_ipd_share_the_same_fixed_point():
    g, facts, objs, ref = quadratic_instance()
    admm = run_exact_admm(g, objs, rho=0.5, B=30, inner_tol=1e-12, max_iter=2000, tol=1e-12,
                          facts=facts, reference=ref)
    ipd = run_ipd(g, objs, RunConfig(eta=0.1, rho=0.5, B=30, max_outer_iterations=5000, stop_tolerance=1e-12),
                  facts=facts, reference=ref)
    assert admm.status == ipd.status == "converged"
    np.testing.assert_allclose(admm.x.mean(0), ipd.x.mean(0), atol=1e-5)


def test_exact_admm_inner_cap_raises():
    g = ring_with_random_chords(4, 0.3, 0)
    objs = small_logistic()
    with pytest.raises(InnerSolveError):
        run_exact_admm(g, objs, rho=0.5, inner_tol=1e-12, max_iter=5, max_inner=2)
    with pytest.raises(InvalidInputError):
        run_exact_admm(g, objs, rho=0.5, inner_tol=0.0)
