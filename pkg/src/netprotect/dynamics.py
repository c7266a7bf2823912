"""Spreading dynamics: mean-field SIS, exact stochastic SIS, and G-SEIV.

All models share the adjacency orientation of :mod:`netprotect.graph`:
``beta[i, j]`` is the rate at which an infected node ``j`` infects ``i``.
"""
from __future__ import annotations

import heapq
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _io
from .exceptions import DomainError, StepSizeError
from .graph import Digraph, dominant_metzler_eigenvalue, spectral_radius

__all__ = [
    "SpreadingParams",
    "Trajectory",
    "GSEIVParams",
    "make_rng",
    "stability_margin",
    "meanfield_simulate",
    "fit_decay_rate",
    "stochastic_simulate",
    "extinction_times",
    "gseiv_meanfield",
    "gseiv_matrix",
    "gseiv_is_stable",
    "write_trajectory_csv",
    "write_event_log_csv",
    "read_trajectory_csv",
]

CLAMP_BAND = 1e-6


class SpreadingParams:
    """Edge infection rates ``beta`` (sparse, ``beta[i, j]`` for ``j -> i``) and
    node recovery rates ``delta``."""

    def __init__(self, beta, delta):
        b = sp.csr_matrix(beta, dtype=float)
        b.eliminate_zeros()
        b.sort_indices()
        d = np.asarray(delta, dtype=float).ravel()
        if b.shape != (d.size, d.size):
            raise DomainError(f"beta has shape {b.shape} but delta has length {d.size}")
        if b.nnz and not np.all(b.data > 0):
            raise DomainError("infection rates must be positive")
        if not np.all(d > 0):
            raise DomainError("recovery rates must be positive")
        self.beta = b
        self.delta = d
        self._incoming = None

    @classmethod
    def from_graph(cls, g: Digraph, beta, delta, node_level: bool = False) -> "SpreadingParams":
        """Rates on the edges of ``g``.

        ``beta`` is one rate per edge (in ``g.edges`` order) or, with
        ``node_level=True``, one scaling factor per node so that
        ``beta_ij = beta_i * a_ij``. Scalars broadcast.
        """
        n = g.node_count
        if node_level:
            bn = np.broadcast_to(np.asarray(beta, dtype=float), (n,))
            vals = bn[g.targets] * g.weights
        else:
            vals = np.broadcast_to(np.asarray(beta, dtype=float), (g.edge_count,))
        mat = sp.csr_matrix((vals, (g.targets, g.sources)), shape=(n, n))
        return cls(mat, np.broadcast_to(np.asarray(delta, dtype=float), (n,)))

    @property
    def n(self) -> int:
        return self.delta.size

    def default_step(self) -> float:
        rows = np.asarray(self.beta.sum(axis=1)).ravel()
        return 0.01 / max(float(self.delta.max()), float(rows.max()) if rows.size else 0.0)

    def digest(self) -> str:
        coo = self.beta.tocoo()
        return _io.digest(coo.row, coo.col, coo.data, self.delta)

    def outgoing(self):
        """Per source node: (targets, rates) it can infect."""
        if self._incoming is None:
            t = self.beta.T.tocsr()
            self._incoming = t
        return self._incoming


@dataclass
class Trajectory:
    """Sampled path. ``values`` is (time x node) for SIS models."""

    times: np.ndarray
    values: np.ndarray
    kind: str
    events: list = field(default_factory=list, repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


def make_rng(seed: int, trial: int | None = None) -> np.random.Generator:
    """PCG64 generator; ``trial`` selects an independent child stream."""
    key = () if trial is None else (int(trial),)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def stability_margin(params: SpreadingParams) -> float:
    """``-Re lambda_1(B - D)``; positive means the disease-free state is
    exponentially stable."""
    return -dominant_metzler_eigenvalue(params.beta, params.delta).value


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------

def _rk4(rhs, x0, t_end, step, record_every, check):
    if not step > 0:
        raise DomainError(f"step must be positive, got {step!r}")
    if t_end < 0:
        raise DomainError("t_end must be nonnegative")
    nsteps = int(math.ceil(t_end / step - 1e-9)) if t_end > 0 else 0
    x = np.array(x0, dtype=float)
    times = [0.0]
    rows = [x.copy()]
    t = 0.0
    for k in range(1, nsteps + 1):
        h = min(step, t_end - t) if k == nsteps else step
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * h * k1)
        k3 = rhs(x + 0.5 * h * k2)
        k4 = rhs(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        x = check(x, k * step if k < nsteps else t_end)
        t = k * step if k < nsteps else t_end
        if k % record_every == 0 or k == nsteps:
            times.append(t)
            rows.append(x.copy())
    return np.asarray(times), np.asarray(rows)


def _clamp_probabilities(x, t):
    if np.any(x < -CLAMP_BAND) or np.any(x > 1 + CLAMP_BAND) or not np.all(np.isfinite(x)):
        raise StepSizeError(f"state left [0, 1] at t={t:.6g}; reduce the step size")
    return np.clip(x, 0.0, 1.0)


def meanfield_simulate(params: SpreadingParams, p0, t_end: float, step: float | None = None,
                       record_every: int = 1) -> Trajectory:
    """Integrate ``dp_i/dt = (1 - p_i) sum_j beta_ij p_j - delta_i p_i`` with RK4.

    ``step`` defaults to ``0.01 / max(delta, row sums of beta)``. States
    within ``1e-6`` of ``[0, 1]`` are clamped; larger excursions raise
    :class:`StepSizeError`.
    """
    p0 = np.asarray(p0, dtype=float)
    if p0.shape != (params.n,) or np.any(p0 < 0) or np.any(p0 > 1):
        raise DomainError("p0 must be a probability vector with one entry per node")
    step = params.default_step() if step is None else float(step)
    b, d = params.beta, params.delta

    def rhs(p):
        return (1.0 - p) * (b @ p) - d * p

    times, values = _rk4(rhs, p0, float(t_end), step, max(1, int(record_every)),
                         _clamp_probabilities)
    return Trajectory(times, values, "meanfield",
                      meta={"step": step, "params_digest": params.digest()})


def fit_decay_rate(traj: Trajectory, start_fraction: float = 0.5) -> tuple[float, float]:
    """Least-squares fit of ``log ||p(t)|| = log(K ||p(0)||) - rate * t``.

    Only samples with ``t >= start_fraction * t_end`` and positive norm are
    used. Returns ``(rate, K)``.
    """
    norms = np.linalg.norm(traj.values, axis=1)
    t_end = traj.times[-1]
    mask = (traj.times >= start_fraction * t_end) & (norms > 0)
    if mask.sum() < 2:
        raise DomainError("not enough positive samples to fit a decay rate")
    slope, intercept = np.polyfit(traj.times[mask], np.log(norms[mask]), 1)
    k = math.exp(intercept) / norms[0] if norms[0] > 0 else math.nan
    return float(-slope), float(k)


# ---------------------------------------------------------------------------
# exact stochastic simulation
# ---------------------------------------------------------------------------

def _gillespie(params, x0, t_end, rng, record):
    n = params.n
    b = params.beta
    indptr, indices, data = b.indptr, b.indices, b.data
    out = params.outgoing()
    oindptr, oindices = out.indptr, out.indices
    delta = params.delta
    x = np.array(x0, dtype=np.int8)
    version = np.zeros(n, dtype=np.int64)
    heap = []

    def pressure(i):
        lo, hi = indptr[i], indptr[i + 1]
        return float(data[lo:hi] @ x[indices[lo:hi]])

    def schedule(i, now):
        version[i] += 1
        rate = delta[i] if x[i] else pressure(i)
        if rate > 0:
            heapq.heappush(heap, (now + rng.exponential(1.0 / rate), i, version[i]))

    for i in range(n):
        schedule(i, 0.0)
    events = []
    infected = int(x.sum())
    t = 0.0
    while heap:
        t_ev, i, ver = heapq.heappop(heap)
        if ver != version[i]:
            continue
        if t_ev > t_end:
            break
        t = t_ev
        x[i] ^= 1
        infected += 1 if x[i] else -1
        if record:
            events.append((t, i, int(x[i])))
        schedule(i, t)
        for k in oindices[oindptr[i]:oindptr[i + 1]]:
            if not x[k]:
                schedule(k, t)
        if infected == 0:
            break
    extinct_at = t if infected == 0 else math.inf
    if infected == 0 and int(np.asarray(x0).sum()) == 0:
        extinct_at = 0.0
    return events, x, extinct_at


def stochastic_simulate(params: SpreadingParams, x0, t_end: float, seed: int,
                        trial: int | None = None) -> Trajectory:
    """Exact event-driven simulation of the networked SIS Markov chain.

    A susceptible node ``i`` becomes infected at rate ``sum_j beta_ij X_j``;
    an infected node recovers at rate ``delta_i``. Each node keeps one
    pending exponential clock in a binary heap; a node's clock is redrawn
    whenever its own rate changes, which is exact because exponential clocks
    are memoryless. The run stops at ``t_end`` or when no node is infected.
    """
    x0 = np.asarray(x0)
    if x0.shape != (params.n,) or not np.all((x0 == 0) | (x0 == 1)):
        raise DomainError("x0 must be a binary vector with one entry per node")
    rng = make_rng(seed, trial)
    events, _, extinct_at = _gillespie(params, x0, float(t_end), rng, record=True)
    times = np.empty(len(events) + 1)
    values = np.empty((len(events) + 1, params.n), dtype=np.int8)
    times[0] = 0.0
    values[0] = x0
    state = values[0].copy()
    for r, (t, i, s) in enumerate(events, start=1):
        state[i] = s
        times[r] = t
        values[r] = state
    return Trajectory(times, values, "stochastic", events=events,
                      meta={"seed": int(seed), "trial": trial, "t_end": float(t_end),
                            "extinction_time": extinct_at, "params_digest": params.digest()})


def extinction_times(params: SpreadingParams, x0, t_end: float, n_runs: int,
                     seed: int) -> np.ndarray:
    """Extinction time of each of ``n_runs`` trials (``inf`` if still alive at
    ``t_end``). Trial ``k`` always uses stream ``make_rng(seed, k)``."""
    x0 = np.asarray(x0)
    out = np.empty(n_runs)
    for k in range(n_runs):
        _, _, out[k] = _gillespie(params, x0, float(t_end), make_rng(seed, k), record=False)
    return out


# ---------------------------------------------------------------------------
# G-SEIV
# ---------------------------------------------------------------------------

class GSEIVParams:
    """Per-node rates of the G-SEIV model on graph ``g``.

    Transmission rates may be zero; ``theta`` may be zero (then the
    vigilance factor ``gamma / (theta + gamma)`` is one). ``delta``,
    ``epsilon_latency`` and ``gamma`` must be positive.
    """

    def __init__(self, graph: Digraph, beta_E, beta_I, delta, epsilon_latency, theta, gamma):
        n = graph.node_count
        self.graph = graph

        def arr(v, name, positive):
            a = np.array(np.broadcast_to(np.asarray(v, dtype=float), (n,)))
            if positive and not np.all(a > 0):
                raise DomainError(f"{name} must be positive")
            if not np.all(a >= 0):
                raise DomainError(f"{name} must be nonnegative")
            return a

        self.beta_E = arr(beta_E, "beta_E", False)
        self.beta_I = arr(beta_I, "beta_I", False)
        self.delta = arr(delta, "delta", True)
        self.epsilon_latency = arr(epsilon_latency, "epsilon_latency", True)
        self.theta = arr(theta, "theta", False)
        self.gamma = arr(gamma, "gamma", True)

    @property
    def n(self) -> int:
        return self.graph.node_count

    @property
    def vigilance_factor(self) -> np.ndarray:
        return self.gamma / (self.theta + self.gamma)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in
                ("beta_E", "beta_I", "delta", "epsilon_latency", "theta", "gamma")}


def gseiv_meanfield(params: GSEIVParams, state0, t_end: float, step: float | None = None,
                    record_every: int = 1) -> Trajectory:
    """RK4 integration of the G-SEIV mean-field equations.

    ``state0`` is either shape ``(4, n)`` or a flat vector of blocks
    ``[S, E, I, V]``. Each node's four probabilities must sum to one.
    ``values`` in the result has the same flat block layout.
    """
    n = params.n
    s0 = np.asarray(state0, dtype=float).reshape(4, n)
    if np.any(s0 < 0) or np.any(s0 > 1) or np.any(np.abs(s0.sum(axis=0) - 1.0) > 1e-9):
        raise DomainError("each node's S, E, I, V probabilities must be in [0, 1] and sum to 1")
    a = params.graph.adjacency()
    bE, bI = params.beta_E, params.beta_I
    eps, dl, th, gm = params.epsilon_latency, params.delta, params.theta, params.gamma
    if step is None:
        rows = np.asarray(a.sum(axis=1)).ravel()
        scale = max(float((np.maximum(bE, bI) * rows).max()), float(eps.max()),
                    float(dl.max()), float((th + gm).max()))
        step = 0.01 / scale

    def rhs(z):
        S, E, I, V = z[:n], z[n:2 * n], z[2 * n:3 * n], z[3 * n:]
        force = S * (bE * (a @ E) + bI * (a @ I))
        return np.concatenate((
            gm * V - th * S - force,
            force - eps * E,
            eps * E - dl * I,
            dl * I + th * S - gm * V,
        ))

    def check(z, t):
        return _clamp_probabilities(z, t)

    times, values = _rk4(rhs, s0.ravel(), float(t_end), float(step),
                         max(1, int(record_every)), check)
    return Trajectory(times, values, "gseiv", meta={"step": float(step)})


def gseiv_matrix(params: GSEIVParams) -> np.ndarray:
    """Linearisation at the disease-free state, acting on ``[E, I]``::

        [[T B_E A - Eps,  T B_I A],
         [Eps,            -D     ]]
    """
    a = params.graph.adjacency(dense=True)
    t = params.vigilance_factor
    n = params.n
    q = np.zeros((2 * n, 2 * n))
    q[:n, :n] = (t * params.beta_E)[:, None] * a - np.diag(params.epsilon_latency)
    q[:n, n:] = (t * params.beta_I)[:, None] * a
    q[n:, :n] = np.diag(params.epsilon_latency)
    q[n:, n:] = -np.diag(params.delta)
    return q


def gseiv_is_stable(params: GSEIVParams, tol: float = 1e-12) -> tuple[bool, float]:
    """Hurwitz test of :func:`gseiv_matrix`; returns ``(stable, abscissa)``.

    Dense eigenvalues for ``n <= 200``; above that the matrix is Metzler, so
    its abscissa is the Perron root of a diagonal shift minus the shift.
    """
    q = gseiv_matrix(params)
    if params.n <= 200:
        abscissa = float(np.linalg.eigvals(q).real.max())
    else:
        shift = float(np.max(-np.diag(q))) + 1.0
        abscissa = spectral_radius(sp.csr_matrix(q + shift * np.eye(len(q)))).value - shift
    return abscissa < -tol, abscissa


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def write_trajectory_csv(traj: Trajectory, path, metadata: dict | None = None) -> None:
    """Write ``t,node_0,...`` rows plus a ``<path>.meta.json`` sidecar."""
    n = traj.values.shape[1]
    header = ["t"] + [f"node_{i}" for i in range(n)]
    _io.write_csv(path, header, ([t, *row] for t, row in zip(traj.times, traj.values)))
    meta = {"kind": traj.kind, **traj.meta, **(metadata or {})}
    _io.write_json(meta, os.fspath(path) + ".meta.json")


def write_event_log_csv(traj: Trajectory, path, metadata: dict | None = None) -> None:
    _io.write_csv(path, ["t", "node", "new_state"], ([t, i, s] for t, i, s in traj.events))
    meta = {"kind": traj.kind, **traj.meta, **(metadata or {})}
    _io.write_json(meta, os.fspath(path) + ".meta.json")


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(os.fspath(path), delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:]
