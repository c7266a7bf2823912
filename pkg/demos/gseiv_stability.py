"""Stability of the generalised SEIV model with vigilance.

Nodes move through susceptible, exposed, infected and vigilant states.
Whether the disease-free state is stable is decided by the spectral abscissa
of a 2n x 2n Metzler matrix. Here we scan the transmission rate of infected
nodes and watch the verdict flip, then confirm one case of each by
integrating the mean-field equations.
"""
import numpy as np

from netprotect import GSEIVParams, gseiv_is_stable, gseiv_meanfield, worst_case_graph

g = worst_case_graph(2, 5, reverse=True)
n = g.node_count
base = dict(beta_E=0.02, delta=0.3, epsilon_latency=0.5, theta=0.2, gamma=1.0)

print(f"{'beta_I':>8}{'abscissa':>12}  verdict")
for beta_i in np.linspace(0.0, 0.8, 9):
    stable, absc = gseiv_is_stable(GSEIVParams(g, beta_I=beta_i, **base))
    print(f"{beta_i:>8.2f}{absc:>+12.5f}  {'stable' if stable else 'unstable'}")

# start with 10% exposed everywhere
state0 = np.zeros((4, n))
state0[0], state0[1] = 0.9, 0.1
for beta_i in (0.1, 0.8):
    p = GSEIVParams(g, beta_I=beta_i, **base)
    traj = gseiv_meanfield(p, state0, 150.0, record_every=500)
    infected = traj.values[:, n:3 * n].sum(axis=1)
    print(f"beta_I = {beta_i}: exposed+infected mass {infected[0]:.3f} -> {infected[-1]:.3e}")
