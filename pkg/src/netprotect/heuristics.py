"""Greedy centrality-based protection and its efficiency against the optimum.

Also builds the worst-case graph family on which every such heuristic spends
its whole budget on nodes that do not influence the epidemic threshold.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import _io
from .allocate import AllocationProblem, solve
from .costs import CostModel, WorkstationCost
from .exceptions import GraphError, UndefinedEfficiencyError
from .graph import Digraph, dominant_metzler_eigenvalue, pagerank, weighted_degrees

__all__ = [
    "CENTRALITIES",
    "GreedyStrategy",
    "StrategyOutcome",
    "EfficiencyReport",
    "centrality",
    "centrality_table",
    "greedy_allocate",
    "effective_objective",
    "efficiency",
    "worst_case_graph",
    "relaxed_worst_case_graph",
    "workstation_experiment",
]

CENTRALITIES = (
    "out-degree",
    "in-degree",
    "total-degree",
    "pagerank-forward",
    "pagerank-reverse",
    "pagerank-symmetrized",
)


def centrality(g: Digraph, measure: str, alpha: float = 0.85) -> np.ndarray:
    if measure not in CENTRALITIES:
        raise ValueError(f"unknown centrality {measure!r}; choose from {CENTRALITIES}")
    if measure.startswith("pagerank-"):
        return pagerank(g, alpha, measure.split("-", 1)[1])
    in_deg, out_deg = weighted_degrees(g)
    if measure == "out-degree":
        return out_deg
    if measure == "in-degree":
        return in_deg
    return in_deg + out_deg


def centrality_table(g: Digraph, alpha: float = 0.85, measures=CENTRALITIES) -> dict:
    return {m: centrality(g, m, alpha) for m in measures}


@dataclass(frozen=True)
class GreedyStrategy:
    """Protect the ``k`` top-ranked nodes by ``centrality``.

    Give either ``k`` or ``budget``; with a budget, ``k = floor(budget /
    unit_cost)`` where ``unit_cost`` is the price of full protection of one
    node. ``fractional_remainder`` spends what is left on the next node.
    """

    centrality: str
    alpha: float = 0.85
    k: int | None = None
    budget: float | None = None
    fractional_remainder: bool = False

    def __post_init__(self):
        if self.centrality not in CENTRALITIES:
            raise ValueError(f"unknown centrality {self.centrality!r}")
        if (self.k is None) == (self.budget is None):
            raise ValueError("give exactly one of k or budget")


def _ranking(scores: np.ndarray) -> np.ndarray:
    # descending score, ties by ascending node index
    return np.lexsort((np.arange(scores.size), -scores))


def greedy_allocate(g: Digraph, strategy: GreedyStrategy, beta_lo: float, beta_hi: float,
                    cost=None) -> np.ndarray:
    """Node-level rates of a greedy strategy: top-``k`` nodes get ``beta_lo``.

    ``cost`` is the per-node prevention family (default: workstation cost on
    ``[beta_lo, beta_hi]``), used to turn a budget into ``k``.
    """
    n = g.node_count
    if cost is None and beta_lo < beta_hi:
        cost = WorkstationCost(beta_lo, beta_hi)
    rates = np.full(n, float(beta_hi))
    remainder = 0.0
    if strategy.k is not None:
        k = int(strategy.k)
    else:
        unit = cost.max_spend - cost.min_spend
        k = int(math.floor(strategy.budget / unit + 1e-12))
        remainder = strategy.budget - k * unit
        k = min(k, n)
    if not 0 <= k <= n:
        raise ValueError(f"k must lie in [0, {n}], got {k}")
    order = _ranking(centrality(g, strategy.centrality, strategy.alpha))
    rates[order[:k]] = beta_lo
    if strategy.fractional_remainder and k < n and remainder > 0:
        rates[order[k]] = cost.inverse(cost.min_spend + remainder)
    return rates


def effective_objective(g: Digraph, node_rates, delta) -> float:
    """``-Re lambda_1(diag(beta) A - delta I)``."""
    rates = np.asarray(node_rates, dtype=float)
    if np.any(rates <= 0):
        raise ValueError("rates must be positive")
    a = g.adjacency()
    b = a.multiply(rates[:, None]).tocsr()
    d = np.broadcast_to(np.asarray(delta, dtype=float), (g.node_count,))
    return -dominant_metzler_eigenvalue(b, d).value


def efficiency(g: Digraph, strategy_rates, optimum_eps: float, delta, beta_hi,
               tol: float = 1e-12) -> float:
    """``(eps(beta) - eps(beta_hi)) / (eps* - eps(beta_hi))``."""
    base = effective_objective(g, np.broadcast_to(np.asarray(beta_hi, dtype=float),
                                                  (g.node_count,)), delta)
    denom = optimum_eps - base
    if abs(denom) <= tol:
        raise UndefinedEfficiencyError(
            "the optimum does not improve on the unprotected allocation"
        )
    return (effective_objective(g, strategy_rates, delta) - base) / denom


def worst_case_graph(n: int, m: int, r: float | None = None, reverse: bool = False) -> Digraph:
    """Admins ``0..n-1`` with edges to every node of a directed ``m``-cycle.

    The cycle is ``n -> n+1 -> ... -> n+m-1 -> n``. With ``reverse=True`` the
    admin edges point from the cycle to the admins instead, which defeats the
    in-degree and reverse-PageRank heuristics. All weights are one.

    Requires ``m > n + 2``; when a protection fraction ``r`` is given, also
    ``r * (n + m) < n``.
    """
    n, m = int(n), int(m)
    if n < 1 or not m > n + 2:
        raise GraphError(f"need n >= 1 and m > n + 2, got n={n}, m={m}")
    if r is not None and not r * (n + m) < n:
        raise GraphError(f"need r * (n + m) < n, got r={r}, n={n}, m={m}")
    edges = []
    for s in range(n):
        for c in range(n, n + m):
            edges.append((c, s, 1.0) if reverse else (s, c, 1.0))
    for k in range(m):
        edges.append((n + k, n + (k + 1) % m, 1.0))
    labels = [f"S{i + 1}" for i in range(n)] + [f"C{j + 1}" for j in range(m)]
    return Digraph(n + m, edges, labels)


def relaxed_worst_case_graph(n: int, m: int, seed: int = 0, chords: int | None = None) -> Digraph:
    """Worst-case graph whose cycle block also carries random chords.

    Illustrates that the construction is not unique; it makes no claim to
    reproduce any particular hand-drawn network.
    """
    g = worst_case_graph(n, m)
    rng = np.random.default_rng(seed)
    chords = m // 2 if chords is None else chords
    edges = {(s, d): w for s, d, w in g.edges}
    tries = 0
    added = 0
    while added < chords and tries < 100 * (chords + 1):
        tries += 1
        s, d = rng.integers(n, n + m, size=2)
        if s != d and (int(s), int(d)) not in edges:
            edges[(int(s), int(d))] = 1.0
            added += 1
    return Digraph(n + m, [(s, d, w) for (s, d), w in edges.items()], g.node_labels)


@dataclass
class StrategyOutcome:
    name: str
    rates: np.ndarray
    spend: np.ndarray
    epsilon: float
    efficiency: float


@dataclass
class EfficiencyReport:
    outcomes: list[StrategyOutcome]
    optimum: StrategyOutcome
    baseline_epsilon: float
    settings: dict = field(default_factory=dict)
    centralities: dict = field(default_factory=dict)

    def rows(self):
        return [*self.outcomes, self.optimum]

    def by_name(self, name: str) -> StrategyOutcome:
        for o in self.rows():
            if o.name == name:
                return o
        raise KeyError(name)

    def write_csv(self, path) -> None:
        n = self.optimum.spend.size
        header = ["strategy"] + [f"spend_{i}" for i in range(n)] + ["epsilon", "Q"]
        _io.write_csv(path, header,
                      ([o.name, *o.spend, o.epsilon, o.efficiency] for o in self.rows()))

    def write_centrality_csv(self, path) -> None:
        names = list(self.centralities)
        n = self.optimum.spend.size
        _io.write_csv(path, ["node", *names],
                      ([i, *(self.centralities[k][i] for k in names)] for i in range(n)))


def workstation_experiment(n: int = 3, m: int = 6, beta_lo: float = 0.01, beta_hi: float = 0.5,
                           delta: float = 0.3, budget: float = 3.0, alpha: float = 0.1,
                           strategies=("out-degree", "total-degree", "pagerank-forward",
                                       "pagerank-symmetrized"),
                           graph: Digraph | None = None, tol: float = 1e-7) -> EfficiencyReport:
    """Compare greedy strategies with the GP optimum on the workstation setup.

    Node-level protection only (recovery fixed at ``delta``), workstation
    cost, budget counted in fully protected nodes. ``graph`` defaults to
    ``worst_case_graph(n, m)``.
    """
    g = worst_case_graph(n, m) if graph is None else graph
    cost = WorkstationCost(beta_lo, beta_hi)
    problem = AllocationProblem(g, beta_lo, beta_hi, delta, delta, budget,
                                costs=CostModel("workstation", "reciprocal-antidote"),
                                parameterization="node")
    opt = solve(problem, tol=tol)
    # efficiency of the optimum is measured with the same spectral routine
    # as the heuristics so that Q(beta*) = 1 exactly
    eps_opt = effective_objective(g, opt.beta_star, delta)
    base = effective_objective(g, np.full(g.node_count, beta_hi), delta)
    outcomes = []
    for name in strategies:
        strat = GreedyStrategy(name, alpha=alpha, budget=budget)
        rates = greedy_allocate(g, strat, beta_lo, beta_hi, cost)
        eps = effective_objective(g, rates, delta)
        outcomes.append(StrategyOutcome(name, rates, np.array([cost(b) for b in rates]), eps,
                                        efficiency(g, rates, eps_opt, delta, beta_hi)))
    optimum = StrategyOutcome("optimal", opt.beta_star, opt.prevention_spend, eps_opt,
                              efficiency(g, opt.beta_star, eps_opt, delta, beta_hi))
    settings = {"n": n, "m": m, "beta_lo": beta_lo, "beta_hi": beta_hi, "delta": delta,
                "budget": budget, "alpha": alpha, "gp_epsilon": opt.epsilon_star,
                "certified": bool(opt.certification.passed)}
    return EfficiencyReport(outcomes, optimum, base, settings,
                            centrality_table(g, alpha, tuple(strategies)))
