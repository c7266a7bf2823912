"""Shared builders for the test suite (independent of the package internals)."""
import numpy as np

from netprotect import build_digraph


def random_strong_digraph(rng, n, extra=None, weight_range=(0.5, 2.0)):
    """A Hamiltonian cycle through a random permutation plus random chords."""
    perm = rng.permutation(n)
    edges = {}
    for k in range(n):
        edges[(int(perm[k]), int(perm[(k + 1) % n]))] = float(rng.uniform(*weight_range))
    extra = n if extra is None else extra
    for _ in range(extra):
        s, d = (int(v) for v in rng.integers(0, n, size=2))
        if s != d:
            edges[(s, d)] = float(rng.uniform(*weight_range))
    if n == 1:
        edges = {(0, 0): float(rng.uniform(*weight_range))}
    return build_digraph([(s, d, w) for (s, d), w in edges.items()], node_count=n)


def dense_abscissa(m):
    return float(np.linalg.eigvals(np.asarray(m, dtype=float)).real.max())


def dense_radius(m):
    return float(np.abs(np.linalg.eigvals(np.asarray(m, dtype=float))).max())
