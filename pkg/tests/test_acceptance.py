"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are
printed even when output capture is on.
"""
import json
import math
import time

import numpy as np
import pytest

import netprotect.cli as cli
from netprotect import (AllocationProblem, CostModel, Digraph, GSEIVParams, ReciprocalAntidote,
                        ReciprocalVaccine, SpreadingParams, WorkstationCost, build_digraph,
                        build_gp, extinction_times, fit_decay_rate, gseiv_is_stable,
                        gseiv_meanfield, meanfield_simulate, solve, spectral_radius,
                        workstation_experiment, write_edge_list)
from netprotect.gp import log_transform

from helpers import dense_abscissa, dense_radius, random_strong_digraph


@pytest.fixture
def verdict(capsys, request):
    """Call ``verdict(ok, detail)`` once; prints the line and asserts."""
    name = request.node.name.replace("test_", "", 1)

    def report(ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance] {name}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail

    return report


def test_criterion_01_counterexample(verdict):
    t0 = time.perf_counter()
    rep = workstation_experiment(n=3, m=6, beta_lo=0.01, beta_hi=0.5, delta=0.3, budget=3.0,
                                 alpha=0.1)
    elapsed = time.perf_counter() - t0
    names = [o.name for o in rep.outcomes]
    greedy_ok = all(o.epsilon < 0 and abs(o.efficiency) <= 1e-8 for o in rep.outcomes)
    opt_ok = rep.optimum.epsilon > 0 and abs(rep.optimum.efficiency - 1.0) <= 1e-12
    ok = (greedy_ok and opt_ok and elapsed < 5.0 and len(names) == 4
          and set(names) == {"out-degree", "total-degree", "pagerank-forward",
                             "pagerank-symmetrized"})
    worst = max(abs(o.efficiency) for o in rep.outcomes)
    verdict(ok, f"greedy eps={[round(o.epsilon, 6) for o in rep.outcomes]}, max|Q|={worst:.1e}, "
                f"eps*={rep.optimum.epsilon:.6f}, Q*={rep.optimum.efficiency}, {elapsed:.2f}s")


def test_criterion_02_gp_certification(verdict):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst_eps = worst_budget = worst_cert = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 16))
        g = random_strong_digraph(rng, n, extra=int(rng.integers(0, 2 * n)))
        p = AllocationProblem(g, rng.uniform(0.02, 0.1, g.edge_count),
                              rng.uniform(0.3, 0.8, g.edge_count),
                              rng.uniform(0.05, 0.2, n), rng.uniform(0.4, 0.9, n), 1.0,
                              costs=CostModel("reciprocal-vaccine", "reciprocal-antidote"))
        p = AllocationProblem(p.graph, p.beta_lo, p.beta_hi, p.delta_lo, p.delta_hi,
                              float(rng.uniform(0.2, 0.7)) * p.full_protection_cost, costs=p.costs)
        r = solve(p)
        b = p.rate_matrix(r.beta_star).toarray()
        lam1 = dense_abscissa(b - np.diag(r.delta_star))
        worst_eps = max(worst_eps, abs(r.epsilon_star + lam1))
        worst_budget = max(worst_budget, abs(p.budget - r.total_spend))
        u = r.perron_u / r.perron_u.max()
        viol = b @ u + (r.cap - r.delta_star) * u - r.lambda_hat_star * u
        worst_cert = max(worst_cert, float(viol.max()))
    elapsed = time.perf_counter() - t0
    ok = worst_eps <= 1e-6 and worst_budget <= 1e-6 and worst_cert <= 1e-6 and elapsed < 60
    verdict(ok, f"max|eps*+lambda1|={worst_eps:.1e}, max budget gap={worst_budget:.1e}, "
                f"max certificate violation={worst_cert:.1e}, {elapsed:.1f}s")


def _log_grid(lo, hi, step=1e-3):
    k = int(math.ceil(math.log(hi / lo) / step))
    return np.exp(np.linspace(math.log(lo), math.log(hi), k + 1))


def _grid_single_node(a, beta_lo, beta_hi, dlo, dhi, budget):
    # node-level beta and delta free on one node with a self-loop of weight a
    vac = ReciprocalVaccine(beta_lo, beta_hi)
    ant = ReciprocalAntidote(dlo, dhi, 1.0)
    betas = _log_grid(beta_lo, beta_hi)
    dhats = _log_grid(1.0 - dhi, 1.0 - dlo)
    fb = np.array([vac(b) for b in betas])
    gd = np.array([ant(1.0 - x) for x in dhats])
    eps = (1.0 - dhats)[None, :] - a * betas[:, None]
    feasible = fb[:, None] + gd[None, :] <= budget
    return float(eps[feasible].max())


def _grid_two_node(adj, delta, beta_lo, beta_hi, budget):
    # node-level rates on two nodes, recovery fixed
    w = WorkstationCost(beta_lo, beta_hi)
    betas = _log_grid(beta_lo, beta_hi)
    cost = np.array([w(b) for b in betas])
    b0, b1 = betas[:, None], betas[None, :]
    m00, m01 = b0 * adj[0, 0] - delta[0], b0 * adj[0, 1]
    m10, m11 = b1 * adj[1, 0], b1 * adj[1, 1] - delta[1]
    half_tr = 0.5 * (m00 + m11)
    disc = np.sqrt(0.25 * (m00 - m11) ** 2 + m01 * m10)
    eps = -(half_tr + disc)
    feasible = cost[:, None] + cost[None, :] <= budget
    return float(eps[feasible].max())


def test_criterion_03_grid_oracle(verdict):
    rng = np.random.default_rng(7)
    gaps = []
    for _ in range(5):
        a = float(rng.uniform(0.5, 2.0))
        blo, bhi = float(rng.uniform(0.02, 0.1)), float(rng.uniform(0.3, 0.8))
        dlo, dhi = float(rng.uniform(0.05, 0.2)), float(rng.uniform(0.5, 0.9))
        budget = float(rng.uniform(0.3, 1.5))
        p = AllocationProblem(build_digraph([(0, 0, a)]), blo, bhi, dlo, dhi, budget,
                              parameterization="node")
        gaps.append(abs(solve(p).epsilon_star - _grid_single_node(a, blo, bhi, dlo, dhi, budget)))
    for _ in range(5):
        w = rng.uniform(0.5, 2.0, 4)
        edges = [(1, 0, w[0]), (0, 1, w[1])]
        if rng.random() < 0.5:
            edges += [(0, 0, w[2]), (1, 1, w[3])]
        g = build_digraph(edges, node_count=2)
        delta = rng.uniform(0.2, 0.6, 2)
        blo, bhi = float(rng.uniform(0.02, 0.08)), float(rng.uniform(0.3, 0.6))
        budget = float(rng.uniform(0.3, 1.5))
        p = AllocationProblem(g, blo, bhi, delta, delta, budget, parameterization="node",
                              costs=CostModel("workstation"))
        ref = _grid_two_node(g.adjacency(dense=True), delta, blo, bhi, budget)
        gaps.append(abs(solve(p).epsilon_star - ref))
    worst = max(gaps)
    verdict(len(gaps) == 10 and worst <= 1e-3, f"10 problems, max|eps*_GP - eps*_grid|={worst:.1e}")


def test_criterion_04_budget_monotonicity(verdict):
    rng = np.random.default_rng(44)
    worst_drop = -math.inf
    for _ in range(10):
        n = int(rng.integers(3, 16))
        g = random_strong_digraph(rng, n)
        base = AllocationProblem(g, 0.05, 0.5, 0.1, 0.6, 1.0)
        full = base.full_protection_cost
        eps = []
        for frac in np.linspace(0.05, 0.9, 5):
            p = AllocationProblem(g, 0.05, 0.5, 0.1, 0.6, float(frac * full))
            eps.append(solve(p).epsilon_star)
        worst_drop = max(worst_drop, max(a - b for a, b in zip(eps, eps[1:])))
    verdict(worst_drop <= 1e-7, f"max over steps of eps*(C_k) - eps*(C_k+1) = "
                                f"{worst_drop:.1e} over 10 graphs x 5 budgets")


def test_criterion_05_spectral_primitives(verdict):
    rng = np.random.default_rng(5)
    worst_rel = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 51))
        g = random_strong_digraph(rng, n, extra=int(rng.integers(0, 3 * n + 1)),
                                  weight_range=(0.01, 5.0))
        a = g.adjacency()
        ref = dense_radius(a.toarray())
        worst_rel = max(worst_rel, abs(spectral_radius(a).value - ref) / ref)
    worst_cycle = 0.0
    for m in (2, 3, 7, 20):
        w = rng.uniform(0.1, 3.0, m)
        g = build_digraph([(k, (k + 1) % m, w[k]) for k in range(m)], node_count=m)
        gm = float(np.exp(np.log(w).mean()))
        worst_cycle = max(worst_cycle, abs(spectral_radius(g.adjacency()).value - gm))
    worst_star = 0.0
    for n in (2, 5, 10, 50):
        edges = [(0, k, 1.0) for k in range(1, n)] + [(k, 0, 1.0) for k in range(1, n)]
        g = build_digraph(edges, node_count=n)
        worst_star = max(worst_star, abs(spectral_radius(g.adjacency()).value - math.sqrt(n - 1)))
    ok = worst_rel <= 1e-8 and worst_cycle <= 1e-10 and worst_star <= 1e-10
    verdict(ok, f"random max rel err={worst_rel:.1e}, cycle err={worst_cycle:.1e}, "
                f"star err={worst_star:.1e}")


def test_criterion_06_dynamics_consistency(verdict):
    rng = np.random.default_rng(66)
    details = []
    ok = True
    found = 0
    while found < 5:
        n = int(rng.integers(4, 13))
        g = random_strong_digraph(rng, n)
        p = AllocationProblem(g, 0.02, 0.3, 0.2, 0.8, 0.5 * n)
        r = solve(p)
        eps = r.epsilon_star
        if eps < 0.05:
            continue
        found += 1
        params = SpreadingParams.from_graph(g, r.beta_star, r.delta_star)
        traj = meanfield_simulate(params, np.ones(n), 20.0 / eps, record_every=10)
        rate, _ = fit_decay_rate(traj)
        times = extinction_times(params, np.ones(n, dtype=np.int8), 200.0 / eps, 1000,
                                 seed=found)
        frac = float(np.isfinite(times).mean())
        ok &= rate >= eps - 0.02 and frac >= 0.99
        details.append(f"n={n} eps*={eps:.3f} fit={rate:.3f} extinct={frac:.3f}")
    verdict(ok, "; ".join(details))


def test_criterion_07_meanfield_oracle(verdict):
    delta = np.array([0.15, 0.4, 0.9, 2.5])
    p0 = np.array([1.0, 0.6, 0.3, 0.8])
    params = SpreadingParams.from_graph(Digraph(4), 0.0, delta)
    worst = 0.0
    for i in range(4):
        traj = meanfield_simulate(params, p0, 1.0 / delta[i], step=1e-3)
        worst = max(worst, abs(traj.final[i] - p0[i] * math.exp(-1.0)))
    g = random_strong_digraph(np.random.default_rng(70), 6)
    sis = SpreadingParams.from_graph(g, 0.5, 0.3)
    ends = [meanfield_simulate(sis, np.full(6, 0.6), 3.0, step=h).final for h in (0.3, 0.15, 0.075)]
    order = math.log2(np.abs(ends[0] - ends[1]).max() / np.abs(ends[1] - ends[2]).max())
    verdict(worst <= 1e-6 and order >= 3.5, f"decay err={worst:.1e}, observed order={order:.2f}")


def test_criterion_08_gseiv(verdict):
    rng = np.random.default_rng(8)
    g = random_strong_digraph(rng, 7)
    n = 7
    params = GSEIVParams(g, rng.uniform(0, 1, n), rng.uniform(0, 1, n), rng.uniform(0.1, 1, n),
                         rng.uniform(0.1, 1, n), rng.uniform(0, 1, n), rng.uniform(0.1, 1, n))
    raw = rng.uniform(0, 1, (4, n))
    traj = gseiv_meanfield(params, raw / raw.sum(axis=0), 40.0)
    cons = float(np.abs(traj.values.reshape(len(traj.times), 4, n).sum(axis=1) - 1).max())

    eps, dl = rng.uniform(0.1, 1, n), rng.uniform(0.1, 1, n)
    stable, absc = gseiv_is_stable(GSEIVParams(g, 0.0, 0.0, dl, eps, 0.3, 0.7))
    absc_err = abs(absc + min(eps.min(), dl.min()))

    e_rate, d_rate = 0.6, 0.2
    one = GSEIVParams(Digraph(1), 0.0, 0.0, d_rate, e_rate, 0.0, 1.0)
    tr = gseiv_meanfield(one, [0.0, 1.0, 0.0, 0.0], 5.0, step=1e-3, record_every=50)
    t = tr.times
    e_ref = np.exp(-e_rate * t)
    i_ref = e_rate / (d_rate - e_rate) * (np.exp(-e_rate * t) - np.exp(-d_rate * t))
    cf_err = float(max(np.abs(tr.values[:, 1] - e_ref).max(), np.abs(tr.values[:, 2] - i_ref).max()))
    ok = cons <= 1e-8 and stable and absc_err <= 1e-10 and cf_err <= 1e-6
    verdict(ok, f"conservation err={cons:.1e}, abscissa err={absc_err:.1e}, "
                f"closed-form err={cf_err:.1e}")


def test_criterion_09_cost_families(verdict):
    rng = np.random.default_rng(9)
    boundary = 0.0
    for fam in (WorkstationCost(0.01, 0.5), ReciprocalVaccine(0.01, 0.5),
                WorkstationCost(0.2, 0.9), ReciprocalVaccine(0.05, 3.0)):
        boundary = max(boundary, abs(fam(fam.hi)), abs(fam(fam.lo) - 1.0))
    for lo, hi, cap in ((0.1, 0.9, 1.0), (0.3, 0.6, 1.0), (0.5, 2.0, 3.0)):
        g = ReciprocalAntidote(lo, hi, cap)
        boundary = max(boundary, abs(g(lo)), abs(g(hi) - 1.0))
    roundtrip = 0.0
    families = [WorkstationCost(0.01, 0.5), ReciprocalVaccine(0.02, 0.7),
                ReciprocalAntidote(0.1, 0.9), ReciprocalAntidote(0.5, 2.0, 3.0)]
    for fam in families:
        for s in rng.uniform(fam.min_spend, fam.max_spend, 100):
            roundtrip = max(roundtrip, abs(fam(fam.inverse(s)) - s))
    verdict(boundary <= 1e-12 and roundtrip <= 1e-10,
            f"boundary err={boundary:.1e}, inverse round-trip err={roundtrip:.1e}")


def test_criterion_10_transform_gradients(verdict):
    rng = np.random.default_rng(10)
    worst = 0.0
    for k in range(20):
        n = int(rng.integers(1, 8))
        g = random_strong_digraph(rng, n)
        param = "edge" if k % 2 == 0 else "node"
        p = AllocationProblem(g, 0.05, 0.5, 0.1, 0.6, 1.0 + n, parameterization=param)
        cf = log_transform(build_gp(p))
        y = rng.normal(scale=0.5, size=cf.nvar)
        grad = cf.constraint_gradients(y)
        h = 1e-5
        fd = np.empty_like(grad)
        for j in range(cf.nvar):
            e = np.zeros(cf.nvar)
            e[j] = h
            fd[:, j] = (cf.constraint_values(y + e) - cf.constraint_values(y - e)) / (2 * h)
        rel = np.linalg.norm(grad - fd, axis=1) / np.maximum(np.linalg.norm(grad, axis=1), 1e-300)
        worst = max(worst, float(rel.max()))
    verdict(worst <= 1e-6, f"max relative gradient error {worst:.1e} over 20 instances")


def test_criterion_11_reproducibility(verdict, tmp_path):
    g = random_strong_digraph(np.random.default_rng(11), 7)
    write_edge_list(g, tmp_path / "g.csv")
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"graph": "g.csv", "beta_lo": 0.02, "beta_hi": 0.5,
                               "delta_lo": 0.2, "delta_hi": 0.6, "budget": 2.5,
                               "beta": 0.15, "delta": 0.5, "seed": 17, "runs": 50,
                               "t_end": 60.0}))
    outputs = {}
    for run in ("first", "second"):
        out = tmp_path / run
        for cmd in ("solve", "simulate", "gillespie", "heuristics", "compare"):
            extra = ["--sweep", "1:3:3"] if cmd == "compare" else []
            assert cli.main([cmd, "--config", str(cfg), "--out", str(out), *extra]) == 0
        outputs[run] = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
    same = outputs["first"] == outputs["second"]
    verdict(same and len(outputs["first"]) >= 10,
            f"{len(outputs['first'])} files compared byte for byte")
