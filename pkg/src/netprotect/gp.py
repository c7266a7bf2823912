"""Geometric programs, their log transform, and a barrier interior-point solver.

A GP here is::

    minimize    f(x)                       (posynomial)
    subject to  q_i(x) <= 1                (posynomials)
                h_k(x)  = 1                (monomials)

With ``y = log x`` the objective and inequality constraints become
log-sum-exp functions of affine maps of ``y`` and the equalities become
affine, which gives a smooth convex program with closed-form derivatives.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .exceptions import GPBuildError, SolverError

__all__ = [
    "Monomial",
    "Posynomial",
    "GPForm",
    "LogSumExpBlock",
    "ConvexForm",
    "log_transform",
    "BarrierResult",
    "barrier_solve",
]


@dataclass(frozen=True)
class Monomial:
    """``coef * prod_j x_j ** exps[j]`` with ``coef > 0``."""

    coef: float
    exps: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if not (self.coef > 0 and math.isfinite(self.coef)):
            raise GPBuildError(f"monomial coefficient must be positive, got {self.coef!r}")

    def __mul__(self, other: "Monomial") -> "Monomial":
        exps = dict(self.exps)
        for j, a in other.exps.items():
            exps[j] = exps.get(j, 0.0) + a
        return Monomial(self.coef * other.coef, {j: a for j, a in exps.items() if a != 0.0})

    def inverse(self) -> "Monomial":
        return Monomial(1.0 / self.coef, {j: -a for j, a in self.exps.items()})

    def __call__(self, x) -> float:
        v = self.coef
        for j, a in self.exps.items():
            v *= x[j] ** a
        return v


class Posynomial:
    """Sum of monomials."""

    def __init__(self, terms: Sequence[Monomial] = ()):
        self.terms = list(terms)

    def __add__(self, other):
        if isinstance(other, Monomial):
            other = Posynomial([other])
        return Posynomial(self.terms + other.terms)

    def __truediv__(self, m: Monomial) -> "Posynomial":
        inv = m.inverse()
        return Posynomial([t * inv for t in self.terms])

    def __call__(self, x) -> float:
        return float(sum(t(x) for t in self.terms))

    def __len__(self):
        return len(self.terms)

    def collapsed(self) -> "Posynomial":
        """Merge terms with identical exponent vectors by summing coefficients."""
        merged: dict[tuple, float] = {}
        for t in self.terms:
            key = tuple(sorted((j, a) for j, a in t.exps.items() if a != 0.0))
            merged[key] = merged.get(key, 0.0) + t.coef
        return Posynomial([Monomial(c, dict(k)) for k, c in merged.items()])


@dataclass
class GPForm:
    """A GP in standard form.

    ``inequalities`` holds ``(name, posynomial)`` pairs meaning ``q(x) <= 1``;
    ``equalities`` holds ``(name, monomial)`` pairs meaning ``h(x) = 1``.
    """

    variables: list[str]
    objective: Posynomial
    inequalities: list[tuple[str, Posynomial]] = field(default_factory=list)
    equalities: list[tuple[str, Monomial]] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def index(self, name: str) -> int:
        return self.variables.index(name)

    def add_le(self, name: str, lhs, rhs: Monomial | None = None):
        """Add ``lhs <= rhs`` (``rhs`` defaults to 1), stored as ``lhs / rhs <= 1``."""
        if isinstance(lhs, Monomial):
            lhs = Posynomial([lhs])
        if rhs is not None:
            lhs = lhs / rhs
        if len(lhs) == 0:
            return
        self.inequalities.append((name, lhs))

    def add_eq(self, name: str, lhs: Monomial, rhs: Monomial | None = None):
        if rhs is not None:
            lhs = lhs * rhs.inverse()
        self.equalities.append((name, lhs))

    @property
    def n_variables(self) -> int:
        return len(self.variables)


class LogSumExpBlock:
    """Stack of functions ``Q_i(y) = log sum_{k in i} exp(a_k . y + b_k)``.

    Terms are stored row-wise in a sparse matrix ``A`` with an ``owner``
    array mapping each term to its function. Owners are contiguous.
    """

    def __init__(self, posys: Sequence[Posynomial], nvar: int):
        rows, cols, vals, logc, owner = [], [], [], [], []
        k = 0
        for i, p in enumerate(posys):
            p = p.collapsed()
            if len(p) == 0:
                raise GPBuildError(f"function {i} has no terms")
            for t in p.terms:
                for j, a in t.exps.items():
                    rows.append(k)
                    cols.append(j)
                    vals.append(a)
                logc.append(math.log(t.coef))
                owner.append(i)
                k += 1
        self.m = len(posys)
        self.nvar = nvar
        self.A = sp.csr_matrix((vals, (rows, cols)), shape=(k, nvar))
        self.b = np.asarray(logc, dtype=float)
        self.owner = np.asarray(owner, dtype=np.int64)
        self.starts = np.searchsorted(self.owner, np.arange(self.m))
        self.M = sp.csr_matrix((np.ones(k), (self.owner, np.arange(k))), shape=(self.m, k))

    def values(self, y):
        if self.m == 0:
            return np.zeros(0)
        z = self.A @ y + self.b
        mx = np.maximum.reduceat(z, self.starts)
        ez = np.exp(z - mx[self.owner])
        s = np.add.reduceat(ez, self.starts)
        return mx + np.log(s)

    def evaluate(self, y):
        """Return values ``Q``, term weights ``w`` and gradients ``G`` (m x nvar)."""
        if self.m == 0:
            return np.zeros(0), np.zeros(0), sp.csr_matrix((0, self.nvar))
        z = self.A @ y + self.b
        mx = np.maximum.reduceat(z, self.starts)
        ez = np.exp(z - mx[self.owner])
        s = np.add.reduceat(ez, self.starts)
        q = mx + np.log(s)
        w = ez / s[self.owner]
        g = (self.M @ sp.diags(w) @ self.A).tocsr()
        return q, w, g

    def hessian(self, w, g, weights):
        """``sum_i weights_i * hess Q_i`` as a dense matrix."""
        term_w = w * weights[self.owner]
        h = (self.A.T @ sp.diags(term_w) @ self.A).toarray()
        gd = g.toarray()
        h -= gd.T @ (weights[:, None] * gd)
        return h


@dataclass
class ConvexForm:
    """Log-transformed GP: minimise ``F(y)`` s.t. ``Q_i(y) <= 0``, ``E y + e = 0``."""

    variables: list[str]
    objective: LogSumExpBlock
    constraints: LogSumExpBlock
    constraint_names: list[str]
    E: np.ndarray
    e: np.ndarray

    @property
    def nvar(self) -> int:
        return len(self.variables)

    def objective_value(self, y) -> float:
        return float(self.objective.values(y)[0])

    def constraint_values(self, y) -> np.ndarray:
        return self.constraints.values(y)

    def constraint_gradients(self, y):
        _, _, g = self.constraints.evaluate(y)
        return g.toarray()

    def equality_residual(self, y) -> np.ndarray:
        return self.E @ y + self.e


def log_transform(gp: GPForm) -> ConvexForm:
    """Apply ``y = log x`` to every part of ``gp``.

    Posynomials collapse duplicate exponent vectors first, so a two-term
    posynomial with equal exponents becomes a single (affine) term.
    """
    n = gp.n_variables
    obj = LogSumExpBlock([gp.objective], n)
    cons = LogSumExpBlock([p for _, p in gp.inequalities], n)
    E = np.zeros((len(gp.equalities), n))
    e = np.zeros(len(gp.equalities))
    for r, (_, mono) in enumerate(gp.equalities):
        for j, a in mono.exps.items():
            E[r, j] = a
        e[r] = math.log(mono.coef)
    return ConvexForm(list(gp.variables), obj, cons, [nm for nm, _ in gp.inequalities], E, e)


@dataclass
class BarrierResult:
    y: np.ndarray
    t: float
    outer_iterations: int
    newton_iterations: int
    gap: float
    duals: np.ndarray
    kkt_residual: float
    max_constraint: float
    equality_residual: float
    history: list = field(default_factory=list, repr=False)


def _solve_psd(h, g):
    d = np.sqrt(np.maximum(np.abs(np.diag(h)), 1e-300))
    hs = h / d[:, None] / d[None, :]
    gs = g / d
    ridge = 0.0
    for _ in range(8):
        try:
            c = la.cho_factor(hs + ridge * np.eye(len(gs)), check_finite=False)
            return la.cho_solve(c, gs, check_finite=False) / d
        except la.LinAlgError:
            ridge = 1e-14 if ridge == 0.0 else ridge * 100
    return np.linalg.lstsq(hs, gs, rcond=None)[0] / d


def barrier_solve(cf: ConvexForm, y0, tol: float = 1e-7, mu0: float = 1.0,
                  factor: float = 10.0, newton_tol: float = 1e-10,
                  max_newton: int = 100, max_outer: int = 60,
                  tighten: dict | None = None, max_tighten: int = 6) -> BarrierResult:
    """Log-barrier interior-point method for a :class:`ConvexForm`.

    Centering uses damped Newton steps restricted to the null space of the
    equality constraints with a backtracking line search. The barrier weight
    ``mu = 1/t`` starts at ``mu0`` and is divided by ``factor`` until the
    duality-gap bound ``m * mu`` drops below ``tol``.

    ``tighten`` maps constraint names to slack targets: once the gap is
    small, up to ``max_tighten`` further rounds are run while any of these
    constraints (expected to bind) still has ``-Q_i > target`` and that slack
    keeps shrinking. A constraint with a small multiplier otherwise ends with
    a visible slack of about ``1 / (t * multiplier)``.

    ``y0`` must satisfy the equalities and every inequality strictly.
    """
    y = np.array(y0, dtype=float)
    cons = cf.constraints
    m = cons.m
    eq_res = float(np.abs(cf.equality_residual(y)).max()) if len(cf.e) else 0.0
    if eq_res > 1e-9:
        raise SolverError(f"starting point violates equalities by {eq_res:.3e}", y)
    q0 = cons.values(y)
    if m and not np.all(q0 < 0):
        worst = int(np.argmax(q0))
        raise SolverError(
            f"starting point is not strictly feasible: {cf.constraint_names[worst]} = {q0[worst]:.3e}",
            y,
        )
    Z = la.null_space(cf.E) if len(cf.e) else np.eye(cf.nvar)

    def phi(y, t):
        q = cons.values(y)
        if np.any(q >= 0) or not np.all(np.isfinite(q)):
            return math.inf
        return t * cf.objective_value(y) - float(np.log(-q).sum())

    t = 1.0 / mu0
    newton_total = 0
    history = []
    outer = 0
    extra = 0
    gz = np.zeros(Z.shape[1])
    watch = [(cf.constraint_names.index(k), v) for k, v in (tighten or {}).items()]
    prev_slack = None
    while True:
        outer += 1
        for _ in range(max_newton):
            f0, fw, fg = cf.objective.evaluate(y)
            q, w, g = cons.evaluate(y)
            inv = 1.0 / (-q)
            grad = t * fg.toarray()[0] + g.T @ inv
            hess = t * cf.objective.hessian(fw, fg, np.ones(1))
            gd = g.toarray()
            hess += cons.hessian(w, g, inv) + gd.T @ (inv[:, None] ** 2 * gd)
            gz = Z.T @ grad
            hz = Z.T @ hess @ Z
            dz = -_solve_psd(hz, gz)
            dec2 = float(-gz @ dz)
            newton_total += 1
            if dec2 / 2.0 <= newton_tol:
                break
            dy = Z @ dz
            cur = phi(y, t)
            s = 1.0
            while s > 1e-20:
                trial = phi(y + s * dy, t)
                if trial <= cur - 0.25 * s * dec2:
                    break
                s *= 0.5
            else:
                break
            y = y + s * dy
        gap = m / t
        history.append((t, gap, newton_total))
        if outer >= max_outer:
            break
        if gap < tol:
            if not watch or extra >= max_tighten:
                break
            qv = cons.values(y)
            slack = np.array([-qv[i] for i, _ in watch])
            loose = slack > np.array([v for _, v in watch])
            if not loose.any():
                break
            if prev_slack is not None and not np.any(slack[loose] < 0.5 * prev_slack[loose]):
                break
            prev_slack = slack
            extra += 1
        t *= factor
    q = cons.values(y)
    duals = 1.0 / (t * (-q)) if m else np.zeros(0)
    kkt = float(np.abs(gz).max()) / t if gz.size else 0.0
    eq_res = float(np.abs(cf.equality_residual(y)).max()) if len(cf.e) else 0.0
    res = BarrierResult(
        y=y, t=t, outer_iterations=outer, newton_iterations=newton_total, gap=m / t,
        duals=duals, kkt_residual=kkt, max_constraint=float(q.max()) if m else -math.inf,
        equality_residual=eq_res, history=history,
    )
    if m / t >= tol:
        raise SolverError(
            f"barrier method stopped with gap {m / t:.3e} > {tol:.3e}", y,
            {"gap": m / t, "kkt": kkt},
        )
    return res
