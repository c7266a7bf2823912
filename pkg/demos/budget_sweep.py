"""How the best achievable decay rate grows with the budget.

A sweep from zero budget to full protection traces the value curve of the
allocation problem. It is nondecreasing and flattens once every rate hits
its bound. We also show how a greedy out-degree rule fares at each budget
on the worst-case graph: it spends its first units on the admin nodes,
which buys nothing, and only catches up near full protection.
"""
import dataclasses

import numpy as np

from netprotect import (AllocationProblem, CostModel, GreedyStrategy, WorkstationCost,
                        effective_objective, greedy_allocate, solve, worst_case_graph)

g = worst_case_graph(2, 5)
lo, hi, delta = 0.01, 0.5, 0.3
problem = AllocationProblem(g, lo, hi, delta, delta, 0.0, parameterization="node",
                            costs=CostModel("workstation"))
cost = WorkstationCost(lo, hi)
print(f"full protection costs {problem.full_protection_cost:.3f}")
print(f"{'budget':>8}{'optimal':>12}{'greedy':>12}")
for budget in np.linspace(0.0, g.node_count, 7):
    opt = solve(dataclasses.replace(problem, budget=float(budget)))
    rates = greedy_allocate(g, GreedyStrategy("out-degree", budget=float(budget)), lo, hi, cost)
    print(f"{budget:>8.2f}{opt.epsilon_star:>+12.6f}{effective_objective(g, rates, delta):>+12.6f}")
