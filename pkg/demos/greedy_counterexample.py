"""Why centrality-driven protection can be worthless.

The worst-case graph hangs a handful of highly central "admin" nodes off a
directed cycle of ordinary nodes. The admins have no in-edges, so they sit
outside every cycle and contribute nothing to the spectral abscissa. Any
greedy rule that spends on the most central nodes therefore leaves the decay
rate unchanged, while the optimal allocation spreads the budget evenly over
the cycle.
"""
import numpy as np

from netprotect import worst_case_graph, workstation_experiment

n_admins, n_cycle = 3, 6
g = worst_case_graph(n_admins, n_cycle)
print(f"graph: {g.node_count} nodes, {g.edge_count} edges")

report = workstation_experiment(n=n_admins, m=n_cycle, budget=3.0)
print(f"unprotected decay rate: {report.baseline_epsilon:+.6f}")
print(f"{'strategy':<22}{'decay rate':>12}{'efficiency':>12}  protected")
for o in report.rows():
    protected = np.flatnonzero(o.spend > 1e-6)
    labels = ",".join(g.node_labels[i] for i in protected)
    print(f"{o.name:<22}{o.epsilon:>+12.6f}{o.efficiency:>12.3f}  {labels}")

# the optimum puts the same spend on every cycle node
print("optimal spend per cycle node:", np.round(report.optimum.spend[n_admins:], 4))
