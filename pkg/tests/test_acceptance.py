"""Acceptance criteria, one test each.

Every test records a one-line verdict (see ``conftest.py``) before asserting,
so ``pytest tests/test_acceptance.py -s`` prints a PASS/FAIL line per criterion
and the terminal summary repeats them. Tolerances are the stated ones.
"""

from __future__ import annotations

import math
from dataclasses import replace
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from ipdopt import (DirectedGraph, QuadraticObjective, RunConfig, analyze, balance_residual, balance_step,
                    ring_with_random_chords, run_ipd)
from ipdopt.baselines import run_exact_admm, run_push_diging
from ipdopt.cli import main as cli_main
from ipdopt.errors import DivergenceError
from ipdopt.harness import PRESETS, ExperimentSpec, Problem, run_experiment
from ipdopt.metrics import derive_parameters, fit_geometric_rate, theorem_inequalities
from ipdopt.objectives import solve_centralized

from instances import logistic_instance, quadratic_instance

FULL_TOL = 1e-12          # run criterion 1 past 1e-8 so the final iterate is well resolved
MAX_ROUNDS = 5000
PARTIAL_SEEDS = range(10)
Q_LEVELS = (0.3, 0.5, 0.8, 1.0)
ETA_GRID = (0.05, 0.1, 0.2, 0.5, 1.0)


def corollary_config(**overrides) -> RunConfig:
    g, facts, objs, _ = quadratic_instance()
    m_f = min(o.strong_convexity for o in objs)
    M_f = max(o.smoothness for o in objs)
    cert = derive_parameters(m_f, M_f, 0.9, "corollary", lambda2=facts.lambda2)
    base = dict(eta=cert.eta, rho=cert.rho, B=cert.B_min, max_outer_iterations=MAX_ROUNDS,
                stop_tolerance=FULL_TOL)
    base.update(overrides)
    return RunConfig(**base), cert


@lru_cache(maxsize=None)
def criterion1_run():
    """Full-participation run on the quadratic instance with conservation bookkeeping."""
    g, facts, objs, ref = quadratic_instance()
    config, cert = corollary_config()
    worst = {"xi": 0.0}
    seed_sums = {}

    def hook(k, b, xi, active):
        total = xi.sum(axis=0)
        if b == 0:
            seed_sums[k] = (total, np.maximum(np.abs(xi).sum(axis=0), np.finfo(float).tiny))
            return
        ref_sum, scale = seed_sums[k]
        worst["xi"] = max(worst["xi"], float(np.max(np.abs(total - ref_sum) / scale)))

    trace = run_ipd(g, objs, config, facts=facts, reference=ref, inner_hook=hook)
    return trace, cert, worst["xi"], len(seed_sums)


def test_criterion_01_correctness_vs_oracle(verdict):
    _, _, objs, _ = quadratic_instance()
    trace, _, _, _ = criterion1_run()
    x_star, _ = solve_centralized(objs, tol=1e-13)
    reached = trace.rounds_to(1e-8)
    err = float(np.max(np.abs(trace.x.mean(axis=0) - x_star)))
    ok = reached is not None and reached <= MAX_ROUNDS and err <= 1e-6
    verdict(1, ok, f"relative cost error 1e-8 at round {reached} (limit {MAX_ROUNDS}); "
                   f"||mean x - x*||_inf = {err:.2e} after {len(trace) - 1} rounds (limit 1e-6)")


def test_criterion_02_linear_rate(verdict):
    trace, cert, _, _ = criterion1_run()
    fit = fit_geometric_rate(trace.errors, burn_in=0.2)
    ok = fit.rate < 1 and fit.r_squared >= 0.98 and fit.rate <= cert.lam + 0.05
    verdict(2, ok, f"fitted rate {fit.rate:.6f}, R^2 {fit.r_squared:.6f}, certified rate {cert.lam:.6f}")


def test_criterion_03_conservation(verdict):
    trace, _, worst_xi, rounds = criterion1_run()
    worst_y = max(r.dual_sum_norm for r in trace.records)
    ok = rounds == len(trace) - 1 and worst_xi <= 1e-12 and worst_y <= 1e-10
    verdict(3, ok, f"max relative drift of per-coordinate sum xi over {rounds} rounds {worst_xi:.2e} "
                   f"(limit 1e-12); max ||sum y|| {worst_y:.2e} (limit 1e-10)")


def test_criterion_04_weight_balancing_rate(verdict):
    g = ring_with_random_chords(20, 0.2, 0)
    facts = analyze(g)
    w = np.full(g.n, 1.0 / g.num_edges)
    residuals = [balance_residual(g, w)]
    while residuals[-1] > 1e-12 * residuals[0] and len(residuals) < 100_000:
        w = balance_step(g, w)
        residuals.append(balance_residual(g, w))
    fit = fit_geometric_rate(residuals, burn_in=0.2)
    rel = abs(fit.rate - facts.lambda2) / facts.lambda2
    ok = fit.rate < 1 and rel <= 0.15
    verdict(4, ok, f"fitted residual decay {fit.rate:.5f} (R^2 {fit.r_squared:.4f}) vs lambda2(P) "
                   f"{facts.lambda2:.5f}: {100 * rel:.1f}% apart (limit 15%)")


def test_criterion_05_partial_participation(verdict):
    g, facts, objs, ref = quadratic_instance()
    full = criterion1_run()[0].rounds_to(1e-6)
    cap = 4 * full
    medians = {}
    for q in Q_LEVELS:
        rounds = []
        for seed in PARTIAL_SEEDS:
            config, _ = corollary_config(q=q, seed=seed, max_outer_iterations=cap, stop_tolerance=1e-6)
            try:
                hit = run_ipd(g, objs, config, facts=facts, reference=ref).rounds_to(1e-6)
            except DivergenceError:
                hit = None
            rounds.append(math.inf if hit is None else hit)
        medians[q] = float(np.median(rounds))
    within = medians[0.5] <= cap
    ordered = list(medians.values())
    monotone = all(a >= b for a, b in zip(ordered, ordered[1:]))
    shown = ", ".join(f"q={q:g}: {m:g}" for q, m in medians.items())
    verdict(5, within and monotone,
            f"median rounds to 1e-6 ({shown}; inf = not reached within {cap} = 4x full {full}); "
            f"q=0.5 within 4x: {within}; nonincreasing in q: {monotone}"
            + (" (only because unreached medians tie at inf)" if monotone and math.inf in ordered else ""))


def test_criterion_06_inner_round_insensitivity(verdict):
    g, facts, objs, ref = quadratic_instance()
    rounds = {}
    for B in (1, 2, 5):
        config, _ = corollary_config(B=B, max_outer_iterations=50_000, stop_tolerance=1e-4)
        rounds[B] = run_ipd(g, objs, config, facts=facts, reference=ref).rounds_to(1e-4)
    base = rounds[1]
    devs = {B: (math.inf if base is None or r is None else abs(r - base) / base) for B, r in rounds.items()}
    ok = all(d <= 0.25 for d in devs.values())
    verdict(6, ok, "rounds to 1e-4: " + ", ".join(
        f"B={B}: {rounds[B]} ({100 * devs[B]:.0f}% from B=1)" for B in rounds) + " (limit 25%)")


def _best(rows):
    """Row with the fewest rounds to the target; ties broken by the smaller stepsize."""
    hits = [r for r in rows if r.rounds_to_target is not None]
    return min(hits, key=lambda r: (r.rounds_to_target, r.eta or 0.0)) if hits else None


@pytest.fixture(scope="module")
def logistic_rows(tmp_path_factory):
    spec = replace(PRESETS["fig2b"], eta=ETA_GRID, stop_tolerance=0.1, target=0.1)
    g, facts, objs, ref = logistic_instance()
    return run_experiment(spec, tmp_path_factory.mktemp("fig2b"), Problem(g, facts, objs, ref))


def test_criterion_07_push_diging_comparison(verdict, logistic_rows):
    ipd = _best([r for r in logistic_rows if r.method == "ipd"])
    pd = _best([r for r in logistic_rows if r.method == "push_diging"])
    if ipd is None or pd is None:
        verdict(7, False, f"target 0.1 not reached: ipd {ipd is not None}, push_diging {pd is not None}")
    comm = 1 - ipd.scalars_to_target / pd.scalars_to_target
    comp = 1 - ipd.grads_to_target / pd.grads_to_target
    ok = (ipd.scalars_to_target < pd.scalars_to_target and ipd.grads_to_target < pd.grads_to_target
          and comm >= 0.30 and comp >= 0.30)
    verdict(7, ok, f"best ipd eta={ipd.eta:g} ({ipd.grads_to_target} gradients, {ipd.scalars_to_target} "
                   f"scalars) vs best push_diging eta={pd.eta:g} ({pd.grads_to_target} gradients, "
                   f"{pd.scalars_to_target} scalars): computation saving {100 * comp:.1f}%, "
                   f"communication saving {100 * comm:.1f}% (need >= 30% and strict in both)")


def test_criterion_08_exact_admm_comparison(verdict, logistic_rows):
    g, facts, objs, ref = logistic_instance()
    ipd = _best([r for r in logistic_rows if r.method == "ipd"])
    exact = run_exact_admm(g, objs, rho=1.0, B=1, inner_tol=1e-8, max_iter=3000, tol=0.1,
                           facts=facts, reference=ref)
    hit = exact.first_reaching(0.1)
    if ipd is None or hit is None:
        verdict(8, False, f"target 0.1 not reached: ipd {ipd is not None}, exact admm {hit is not None}")
    saving = 1 - ipd.grads_to_target / hit.gradient_evals
    verdict(8, saving >= 0.5, f"ipd eta={ipd.eta:g} {ipd.grads_to_target} gradients vs exact ADMM "
                              f"(inner_tol 1e-8) {hit.gradient_evals}: saving {100 * saving:.1f}% (need >= 50%)")


def test_criterion_09_single_agent_reduces_to_gd(verdict):
    g = DirectedGraph.cycle(1)
    obj = QuadraticObjective([1.0, -2.0, 0.5], 1.5)
    eta, rounds = 0.2, 100
    gd = [np.zeros(3)]
    for _ in range(rounds):
        gd.append(gd[-1] - eta * obj.gradient(gd[-1]))
    gd = np.array(gd)

    ipd_iterates = {}
    config = RunConfig(eta=eta, rho=1.0, B=3, max_outer_iterations=rounds, stop_tolerance=0.0)
    run_ipd(g, [obj], config, inner_hook=lambda k, b, xi, act: ipd_iterates.setdefault(k + 1, xi[0].copy()))
    pd_iterates = {}
    run_push_diging(g, [obj], eta, rounds, 0.0, observer=lambda k, s: pd_iterates.__setitem__(k, s.x[0].copy()))

    ipd_err = max(np.max(np.abs(ipd_iterates[k] - gd[k])) for k in range(1, rounds + 1))
    pd_err = max(np.max(np.abs(pd_iterates[k] - gd[k])) for k in range(rounds + 1))
    ok = len(ipd_iterates) == rounds and len(pd_iterates) == rounds + 1 and max(ipd_err, pd_err) <= 1e-12
    verdict(9, ok, f"max per-iterate deviation from gradient descent over {rounds} rounds: "
                   f"ipd {ipd_err:.1e}, push_diging {pd_err:.1e} (limit 1e-12)")


def test_criterion_10_tracker_identity(verdict):
    g, facts, objs, ref = logistic_instance(n=10, samples=1000)
    worst = {"gap": 0.0, "rounds": 0}

    def observe(k, s):
        grads = np.array([o.gradient(x) for o, x in zip(objs, s.x)])
        gap = float(np.max(np.abs(s.y_tracker.sum(axis=0) - grads.sum(axis=0))))
        worst["gap"] = max(worst["gap"], gap)
        worst["rounds"] = k

    run_push_diging(g, objs, 0.5, 500, 0.0, facts=facts, reference=ref, observer=observe)
    ok = worst["rounds"] == 500 and worst["gap"] <= 1e-10
    verdict(10, ok, f"max |sum y - sum grad f(x)| over k <= {worst['rounds']}: {worst['gap']:.1e} (limit 1e-10)")


def test_criterion_11_certificate_feasibility(verdict, capsys):
    failures = []
    for kappa in (2, 10, 100):
        for delta in (0.5, 0.9):
            cert = derive_parameters(1.0 / kappa, 1.0, delta, "theorem")
            checks = theorem_inequalities(1.0 / kappa, 1.0, delta, cert.B_min, cert.eta, cert.rho)
            failures += [f"kappa={kappa} delta={delta} {k}" for k, (_, ok) in checks.items() if not ok]
    code = cli_main(["certify", "--m-f", "0.1", "--M-f", "1", "--delta", "0.9"])
    out = capsys.readouterr().out
    b_min = [line.split()[1] for line in out.splitlines() if line.split()[:1] == ["B_min"]]
    ok = not failures and code == 0 and b_min == ["45"]
    with capsys.disabled():
        verdict(11, ok, f"theorem-mode 13a-13d violations on the 3x2 grid: {failures or 'none'}; "
                        f"certify (0.1, 1, 0.9) printed B_min={b_min[0] if b_min else '?'}")


def _artifacts(directory: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def test_criterion_12_determinism(verdict, tmp_path):
    quad = ExperimentSpec(methods=("ipd", "push_diging", "exact_admm"), n=10, dimension=5, data_seed=1,
                          parameters="corollary", q=(0.5, 1.0), seeds=(0, 1), max_rounds=200,
                          stop_tolerance=0.0)
    logi = replace(PRESETS["fig2b"], methods=("ipd", "push_diging"), eta=(0.5,), q=(0.5, 1.0),
                   seeds=(0, 1), max_rounds=40, stop_tolerance=0.0)
    differing, count = [], 0
    for name, spec in (("quadratic", quad), ("logistic", logi)):
        first = _artifacts(_run(spec, tmp_path / f"{name}_a"))
        second = _artifacts(_run(spec, tmp_path / f"{name}_b"))
        count += len(first)
        differing += [f"{name}/{k}" for k in first if first[k] != second.get(k)]
        differing += [f"{name}/{k}" for k in second.keys() - first.keys()]
    ok = count > 0 and not differing
    verdict(12, ok, f"{count} CSV artifacts from two repeated harness runs; differing: {differing or 'none'}")


def _run(spec: ExperimentSpec, out: Path) -> Path:
    run_experiment(spec, out)
    return out
