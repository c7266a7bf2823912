"""Weighted directed graphs and the spectral primitives built on them.

Adjacency convention: ``A[i, j]`` holds the weight of the edge ``j -> i``, so
row ``i`` collects the in-edges of node ``i``. Every other module relies on
this orientation (the mean-field infection pressure on node ``i`` is
``sum_j beta_ij p_j`` over its in-neighbours).
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from .exceptions import ConvergenceError, DuplicateEdgeError, GraphError

__all__ = [
    "Digraph",
    "SpectralResult",
    "build_digraph",
    "weighted_degrees",
    "is_strongly_connected",
    "strongly_connected_components",
    "spectral_radius",
    "dominant_metzler_eigenvalue",
    "pagerank",
    "read_edge_list",
    "write_edge_list",
    "format_edge_list",
    "parse_edge_list",
]

PAGERANK_MODES = ("forward", "reverse", "symmetrized")


class Digraph:
    """Immutable weighted digraph on nodes ``0 .. node_count - 1``.

    Parameters
    ----------
    node_count : int
        Number of nodes, at least one.
    edges : iterable of (src, dst, weight)
        Directed edges ``src -> dst`` with strictly positive weights.
    node_labels : sequence of str, optional
        Display names, one per node.

    Notes
    -----
    The adjacency matrix is stored in CSR form with rows indexed by edge
    destination, i.e. as in-edge lists.
    """

    __slots__ = ("_n", "_src", "_dst", "_w", "_labels", "_adj", "_index")

    def __init__(self, node_count: int, edges: Iterable[tuple] = (), node_labels=None):
        if int(node_count) != node_count or node_count < 1:
            raise GraphError(f"node_count must be a positive integer, got {node_count!r}")
        n = int(node_count)
        src, dst, w = [], [], []
        seen: dict[tuple[int, int], int] = {}
        for pos, edge in enumerate(edges):
            try:
                s, d, weight = edge
            except (TypeError, ValueError):
                raise GraphError(f"edge at position {pos} is not a (src, dst, weight) triple")
            if int(s) != s or int(d) != d:
                raise GraphError(f"edge at position {pos} has non-integer endpoints")
            s, d, weight = int(s), int(d), float(weight)
            if not (0 <= s < n and 0 <= d < n):
                raise GraphError(f"edge at position {pos} ({s} -> {d}) is outside [0, {n})")
            if not (weight > 0 and math.isfinite(weight)):
                raise GraphError(
                    f"edge at position {pos} ({s} -> {d}) has non-positive weight {weight!r}"
                )
            if (s, d) in seen:
                raise DuplicateEdgeError(s, d, seen[(s, d)], pos)
            seen[(s, d)] = pos
            src.append(s)
            dst.append(d)
            w.append(weight)
        if node_labels is not None:
            node_labels = tuple(str(x) for x in node_labels)
            if len(node_labels) != n:
                raise GraphError("node_labels must have one entry per node")
        self._n = n
        self._src = np.asarray(src, dtype=np.int64)
        self._dst = np.asarray(dst, dtype=np.int64)
        self._w = np.asarray(w, dtype=float)
        self._labels = node_labels
        self._index = seen
        adj = sp.csr_matrix((self._w, (self._dst, self._src)), shape=(n, n))
        adj.sort_indices()
        self._adj = adj
        for arr in (self._src, self._dst, self._w):
            arr.setflags(write=False)

    @property
    def node_count(self) -> int:
        return self._n

    @property
    def edge_count(self) -> int:
        return len(self._w)

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return list(zip(self._src.tolist(), self._dst.tolist(), self._w.tolist()))

    @property
    def sources(self) -> np.ndarray:
        return self._src

    @property
    def targets(self) -> np.ndarray:
        return self._dst

    @property
    def weights(self) -> np.ndarray:
        return self._w

    @property
    def node_labels(self):
        return self._labels

    def adjacency(self, dense: bool = False):
        """Return ``A`` with ``A[i, j]`` = weight of ``j -> i``.

        A fresh copy is returned so callers cannot mutate the graph.
        """
        if dense:
            return self._adj.toarray()
        return self._adj.copy()

    def weight(self, src: int, dst: int) -> float:
        pos = self._index.get((int(src), int(dst)))
        return 0.0 if pos is None else float(self._w[pos])

    def edge_position(self, src: int, dst: int) -> int:
        return self._index[(int(src), int(dst))]

    def in_neighbors(self, i: int) -> np.ndarray:
        lo, hi = self._adj.indptr[i], self._adj.indptr[i + 1]
        return self._adj.indices[lo:hi].copy()

    def reversed(self) -> "Digraph":
        return Digraph(self._n, zip(self._dst.tolist(), self._src.tolist(), self._w.tolist()),
                       self._labels)

    def __eq__(self, other):
        if not isinstance(other, Digraph):
            return NotImplemented
        return (
            self._n == other._n
            and self._labels == other._labels
            and sorted(self.edges) == sorted(other.edges)
        )

    def __hash__(self):
        return hash((self._n, tuple(sorted(self.edges))))

    def __repr__(self):
        return f"Digraph(node_count={self._n}, edge_count={self.edge_count})"


def build_digraph(edge_list: Sequence[tuple], node_count: int | None = None,
                  node_labels=None) -> Digraph:
    """Build a :class:`Digraph` from ``(src, dst, weight)`` triples.

    When ``node_count`` is omitted it is one more than the largest index used.
    """
    edge_list = list(edge_list)
    if node_count is None:
        if not edge_list:
            raise GraphError("node_count is required for an empty edge list")
        node_count = 1 + max(max(int(e[0]), int(e[1])) for e in edge_list)
    return Digraph(node_count, edge_list, node_labels)


def weighted_degrees(g: Digraph) -> tuple[np.ndarray, np.ndarray]:
    """Weighted in- and out-degrees (sums of incident edge weights)."""
    a = g.adjacency()
    in_deg = np.asarray(a.sum(axis=1)).ravel()
    out_deg = np.asarray(a.sum(axis=0)).ravel()
    return in_deg, out_deg


def strongly_connected_components(g: Digraph) -> np.ndarray:
    _, labels = connected_components(g.adjacency(), directed=True, connection="strong")
    return labels


def is_strongly_connected(g: Digraph) -> bool:
    # A single node is strongly connected by convention.
    ncomp, _ = connected_components(g.adjacency(), directed=True, connection="strong")
    return ncomp == 1


# ---------------------------------------------------------------------------
# spectral primitives
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralResult:
    """Dominant eigenpair estimate.

    ``residual`` is ``max_i |(M u)_i - value * u_i| / max_i |u_i|`` measured
    on the matrix that was asked for (never on a perturbed surrogate).
    """

    value: float
    vector: np.ndarray = field(repr=False)
    iterations: int
    residual: float
    method: str = "plain"


def _as_operator(matrix):
    if sp.issparse(matrix):
        m = sp.csr_matrix(matrix, dtype=float)
        if m.shape[0] != m.shape[1]:
            raise ValueError("matrix must be square")
        if m.nnz and m.data.min() < 0:
            raise ValueError("matrix must be nonnegative")
        # small matrices multiply faster dense than through the sparse dispatch
        return m.toarray() if m.shape[0] <= 256 else m
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if m.size and m.min() < 0:
        raise ValueError("matrix must be nonnegative")
    return m


STALL_WINDOW = 1000
DENSE_FALLBACK_LIMIT = 2000


def _iterate(matvec, u, tol, max_iter):
    lam = 0.0
    res = math.inf
    checkpoint = math.inf
    for k in range(1, max_iter + 1):
        w = matvec(u)
        top = w.max()
        if top <= 0.0:
            # M u = 0: u is a null vector and every eigenvalue of a
            # nonnegative matrix reachable from it is zero.
            return 0.0, u, k, 0.0, True
        lam = float(w @ u) / float(u @ u)
        res = float(np.abs(w - lam * u).max())
        if res <= tol * max(1.0, abs(lam)):
            # return the vector the residual was measured on
            return lam, u, k, res, True
        if k % STALL_WINDOW == 0:
            # a clustered or peripheral spectrum makes the residual plateau;
            # give up once the observed rate cannot reach tol in the budget
            target = tol * max(1.0, abs(lam))
            if res >= checkpoint:
                return lam, w / top, k, res, False
            if math.isfinite(checkpoint):
                needed = STALL_WINDOW * math.log(target / res) / math.log(res / checkpoint)
                if needed > 2 * (max_iter - k):
                    return lam, w / top, k, res, False
            checkpoint = res
        u = w / top
    return lam, u, max_iter, res, False


def _dense_perron(m):
    dense = m.toarray() if sp.issparse(m) else np.asarray(m)
    vals, vecs = np.linalg.eig(dense)
    k = int(np.argmax(vals.real))
    u = np.abs(vecs[:, k].real)
    return float(vals[k].real), u


def spectral_radius(matrix, tol: float = 1e-12, max_iter: int = 20000) -> SpectralResult:
    """Spectral radius of a nonnegative square matrix by power iteration.

    The iteration starts from the all-ones vector. If it stalls (periodic or
    reducible input), it is repeated on ``M + c I``, which has the same Perron
    vector and radius shifted by ``c`` but no peripheral eigenvalues other
    than the Perron root. Next a uniform perturbation ``eta * 1 1^T`` with
    ``eta = 1e-12 * max(M)`` is added. A stage is abandoned early once its
    residual stops decreasing, which happens when distinct components have
    nearly equal radii. For such inputs up to ``DENSE_FALLBACK_LIMIT`` rows a
    dense eigensolver is the last resort. The reported residual is always
    measured against the unperturbed matrix.

    Parameters
    ----------
    matrix : array_like or sparse matrix
        Nonnegative square matrix.
    tol : float
        Convergence threshold on the eigen-residual, relative to
        ``max(1, value)``.
    max_iter : int
        Iteration budget for each stage.

    Returns
    -------
    SpectralResult

    Raises
    ------
    ConvergenceError
        If none of the stages converges.
    """
    m = _as_operator(matrix)
    n = m.shape[0]
    u0 = np.ones(n)
    matvec = (lambda x: m @ x)

    lam, u, it, _, ok = _iterate(matvec, u0, tol, max_iter)
    total = it
    method = "plain"
    if not ok:
        row_sums = np.asarray(abs(m).sum(axis=1)).ravel()
        c = 0.5 * float(row_sums.max())
        lam_s, u, it, _, ok = _iterate(lambda x: matvec(x) + c * x, u0, tol, max_iter)
        lam = lam_s - c
        total += it
        method = "shifted"
        if not ok:
            top = float(m.max()) if n else 0.0
            eta = 1e-12 * top
            lam_p, u, it, _, ok = _iterate(
                lambda x: matvec(x) + c * x + eta * x.sum(), u, tol, max_iter
            )
            lam = lam_p - c
            total += it
            method = "perturbed"
    res = float(np.abs(matvec(u) - lam * u).max() / np.abs(u).max())
    if not ok and n <= DENSE_FALLBACK_LIMIT:
        lam_d, u_d = _dense_perron(m)
        res_d = float(np.abs(matvec(u_d) - lam_d * u_d).max() / np.abs(u_d).max())
        # the dense answer is accepted at a looser residual since a nearly
        # degenerate Perron root has an ill-conditioned eigenvector
        if res_d <= math.sqrt(tol) * max(1.0, abs(lam_d)):
            lam, u, res, ok, method = lam_d, u_d, res_d, True, "dense"
    if not ok:
        raise ConvergenceError(
            f"power iteration did not converge after {total} iterations "
            f"(residual {res:.3e})"
        )
    return SpectralResult(value=lam, vector=u / np.abs(u).max(), iterations=total,
                          residual=res, method=method)


def dominant_metzler_eigenvalue(B, D, shift: float | None = None,
                                tol: float = 1e-13, max_iter: int = 50000) -> SpectralResult:
    """Dominant eigenvalue of the Metzler matrix ``B - diag(D)``.

    Computed as ``rho(B - diag(D) + shift * I) - shift``. ``shift`` must be at
    least ``max(D)`` so that the shifted matrix is nonnegative; the default
    adds a margin of half the largest row sum of ``B`` (or one) so that the
    shifted matrix has a positive diagonal, which rules out periodicity.
    """
    d = np.asarray(D, dtype=float)
    if d.ndim == 2:
        d = np.diag(d)
    if sp.issparse(B):
        b = sp.csr_matrix(B, dtype=float)
        row_sum = float(abs(b).sum(axis=1).max()) if b.shape[0] else 0.0
    else:
        b = np.asarray(B, dtype=float)
        row_sum = float(np.abs(b).sum(axis=1).max()) if b.size else 0.0
    if b.shape != (d.size, d.size):
        raise ValueError("B and D have incompatible shapes")
    if shift is None:
        shift = float(d.max()) + (0.5 * row_sum if row_sum > 0 else 1.0)
    elif shift < d.max():
        raise ValueError(
            f"shift {shift!r} is smaller than the largest diagonal entry {d.max()!r}"
        )
    diag = shift - d
    if sp.issparse(b):
        m = (b + sp.diags(diag)).tocsr()
    else:
        m = b + np.diag(diag)
    res = spectral_radius(m, tol=tol, max_iter=max_iter)
    return SpectralResult(value=res.value - shift, vector=res.vector,
                          iterations=res.iterations, residual=res.residual,
                          method=res.method)


def _walk_matrix(g: Digraph, mode: str):
    a = g.adjacency()
    if mode == "reverse":
        walk = a
    elif mode == "forward":
        walk = a.T.tocsr()
    elif mode == "symmetrized":
        walk = (a + a.T).tocsr()
    else:
        raise ValueError(f"unknown PageRank mode {mode!r}; expected one of {PAGERANK_MODES}")
    col = np.asarray(walk.sum(axis=0)).ravel()
    inv = np.divide(1.0, col, out=np.zeros_like(col), where=col > 0)
    return (walk @ sp.diags(inv)).tocsr(), col == 0


def pagerank(g: Digraph, alpha: float = 0.85, mode: str = "forward") -> np.ndarray:
    """PageRank scores normalised to sum to one.

    Solves ``(I - alpha * P) r = 1`` where ``P`` is the column-stochastic walk
    matrix selected by ``mode``:

    ``"forward"``
        From node ``i`` the walker steps to an in-neighbour ``j`` with
        probability ``a_ij / deg_in(i)``. Nodes whose edges fan out to many
        others collect the most mass; these are the nodes that out-degree
        also ranks highest.
    ``"reverse"``
        The walker follows stored edges ``j -> i`` with probability
        ``a_ij / deg_out(j)``, i.e. ``P = A diag(1 / deg_out)``.
    ``"symmetrized"``
        The walker may cross an edge in either direction
        (``A + A^T``).

    Nodes without an exit are treated as linking uniformly to every node.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    walk, dangling = _walk_matrix(g, mode)
    n = g.node_count
    k = sp.identity(n, format="csc") - alpha * walk.tocsc()
    x = np.atleast_1d(spsolve(k, np.ones(n)))
    # Uniform redistribution from dangling nodes adds (alpha/n) * (d^T r) * 1
    # to the right-hand side, which only rescales x (Sherman-Morrison).
    s = float(x[dangling].sum())
    denom = 1.0 - alpha * s / n
    assert denom > 0 and np.all(np.isfinite(x)), "singular PageRank system"
    r = x / denom
    return r / r.sum()


# ---------------------------------------------------------------------------
# edge-list files
# ---------------------------------------------------------------------------

def format_edge_list(g: Digraph) -> str:
    lines = [f"# nodes: {g.node_count}"]
    if g.node_labels is not None:
        lines.append("# labels: " + ",".join(g.node_labels))
    for s, d, w in g.edges:
        lines.append(f"{s},{d},{w!r}")
    return "\n".join(lines) + "\n"


def parse_edge_list(text: str, node_count: int | None = None) -> Digraph:
    """Parse ``src,dst,weight`` lines; ``#`` starts a comment.

    A ``# nodes: N`` comment (as written by :func:`format_edge_list`) fixes
    the node count so that trailing isolated nodes survive a round trip, and
    ``# labels: a,b,...`` restores node labels.
    """
    edges = []
    declared = None
    labels = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("#"):
            body = line[1:].strip()
            if body.lower().startswith("nodes:"):
                try:
                    declared = int(body.split(":", 1)[1])
                except ValueError:
                    raise GraphError(f"line {lineno}: malformed node-count comment")
            elif body.lower().startswith("labels:"):
                labels = [x.strip() for x in body.split(":", 1)[1].split(",")]
            continue
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise GraphError(f"line {lineno}: expected 'src,dst,weight', got {raw!r}")
        try:
            edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
        except ValueError:
            raise GraphError(f"line {lineno}: cannot parse {raw!r}")
    n = node_count if node_count is not None else declared
    return build_digraph(edges, node_count=n, node_labels=labels)


def read_edge_list(path, node_count: int | None = None) -> Digraph:
    with open(os.fspath(path), encoding="utf-8") as fh:
        return parse_edge_list(fh.read(), node_count)


def write_edge_list(g: Digraph, path) -> None:
    with open(os.fspath(path), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_edge_list(g))
