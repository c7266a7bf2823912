"""Budget-constrained allocation of preventive and corrective resources.

The spectral problem "maximise the decay rate subject to a budget" is cast as
a geometric program over the propagation rates, the complementary recovery
rates ``delta_hat = cap - delta``, a positive certificate vector ``u`` and a
bound ``lambda_hat`` on the spectral radius of ``B + diag(delta_hat)``::

    minimise    lambda_hat
    subject to  sum_j beta_ij u_j + delta_hat_i u_i <= lambda_hat u_i
                sum f(beta) + sum g_hat(delta_hat) <= C
                box constraints on beta and delta_hat

The decay rate is ``epsilon = cap - lambda_hat``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import costs as _costs
from .exceptions import DomainError, GPBuildError, InfeasibleBudgetError, SolverError
from .gp import GPForm, Monomial, Posynomial, barrier_solve, log_transform
from .graph import Digraph, dominant_metzler_eigenvalue, is_strongly_connected, spectral_radius

__all__ = [
    "AllocationProblem",
    "AllocationResult",
    "CertificationReport",
    "build_gp",
    "solve",
    "certify",
]

# Range allowed for the certificate vector when the graph is reducible; the
# optimum there pushes some entries of u towards zero.
U_GUARD = 1e10


def _broadcast(value, size, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(size, float(arr))
    if arr.shape != (size,):
        raise DomainError(f"{name} must be a scalar or have length {size}, got shape {arr.shape}")
    return arr.copy()


@dataclass
class AllocationProblem:
    """Inputs of the budget-constrained allocation problem.

    Parameters
    ----------
    graph : Digraph
    beta_lo, beta_hi : float or array
        Bounds on the propagation rates: one per edge for
        ``parameterization="edge"``, one per node for ``"node"`` (where
        ``beta_ij = beta_i * a_ij``).
    delta_lo, delta_hi : float or array
        Bounds on the recovery rates, one per node. Equal bounds freeze the
        rate, which disables correction resources at that node.
    budget : float
    cap : float, optional
        Recovery ceiling ``Delta``; must exceed every ``delta_hi``. Defaults
        to 1 when all ``delta_hi < 1`` and to ``max(delta_hi) + 1`` otherwise.
    costs : CostModel
    """

    graph: Digraph
    beta_lo: object
    beta_hi: object
    delta_lo: object
    delta_hi: object
    budget: float
    cap: float | None = None
    costs: _costs.CostModel = field(default_factory=_costs.CostModel)
    parameterization: str = "edge"

    def __post_init__(self):
        if self.parameterization not in ("edge", "node"):
            raise DomainError(f"parameterization must be 'edge' or 'node', got {self.parameterization!r}")
        n = self.graph.node_count
        nb = self.graph.edge_count if self.parameterization == "edge" else n
        self.beta_lo = _broadcast(self.beta_lo, nb, "beta_lo")
        self.beta_hi = _broadcast(self.beta_hi, nb, "beta_hi")
        self.delta_lo = _broadcast(self.delta_lo, n, "delta_lo")
        self.delta_hi = _broadcast(self.delta_hi, n, "delta_hi")
        if np.any(self.beta_lo <= 0) or np.any(self.beta_lo > self.beta_hi):
            raise DomainError("need 0 < beta_lo <= beta_hi")
        if np.any(self.delta_lo <= 0) or np.any(self.delta_lo > self.delta_hi):
            raise DomainError("need 0 < delta_lo <= delta_hi")
        if self.cap is None:
            top = float(self.delta_hi.max())
            self.cap = 1.0 if top < 1.0 else top + 1.0
        self.cap = float(self.cap)
        if not np.all(self.delta_hi < self.cap):
            raise DomainError(f"every delta_hi must be below cap={self.cap!r}")
        self.budget = float(self.budget)
        if not math.isfinite(self.budget) or self.budget < 0:
            raise DomainError(f"budget must be a nonnegative number, got {self.budget!r}")
        if not isinstance(self.costs, _costs.CostModel):
            self.costs = _costs.CostModel(**self.costs)
        self.prevention = [
            self.costs.prevention_family(lo, hi) if lo < hi else None
            for lo, hi in zip(self.beta_lo, self.beta_hi)
        ]
        self.correction = [
            self.costs.correction_family(lo, hi, self.cap) if lo < hi else None
            for lo, hi in zip(self.delta_lo, self.delta_hi)
        ]

    # -- helpers -------------------------------------------------------------
    @property
    def n_beta(self) -> int:
        return len(self.beta_lo)

    @property
    def node_level(self) -> bool:
        return self.parameterization == "node"

    def rate_matrix(self, beta) -> sp.csr_matrix:
        """``B`` with ``B[i, j] = beta_ij`` (row ``i`` = in-edges of ``i``)."""
        beta = np.asarray(beta, dtype=float)
        g = self.graph
        if self.node_level:
            vals = beta[g.targets] * g.weights
        else:
            vals = beta
        return sp.csr_matrix((vals, (g.targets, g.sources)), shape=(g.node_count,) * 2)

    def spend(self, beta, delta) -> tuple[np.ndarray, np.ndarray]:
        prev = np.array([0.0 if f is None else float(f(b)) for f, b in zip(self.prevention, beta)])
        corr = np.array([0.0 if f is None else float(f(d)) for f, d in zip(self.correction, delta)])
        return prev, corr

    @property
    def baseline_beta(self) -> np.ndarray:
        return self.beta_hi.copy()

    @property
    def baseline_delta(self) -> np.ndarray:
        return self.delta_lo.copy()

    @property
    def baseline_cost(self) -> float:
        p, c = self.spend(self.baseline_beta, self.baseline_delta)
        return float(p.sum() + c.sum())

    @property
    def full_protection_cost(self) -> float:
        p, c = self.spend(self.beta_lo, self.delta_hi)
        return float(p.sum() + c.sum())

    def decay_rate(self, beta, delta) -> float:
        """``-lambda_1(B - D)`` computed spectrally."""
        res = dominant_metzler_eigenvalue(self.rate_matrix(beta), np.asarray(delta, dtype=float))
        return -res.value

    def to_dict(self) -> dict:
        return {
            "parameterization": self.parameterization,
            "beta_lo": self.beta_lo.tolist(),
            "beta_hi": self.beta_hi.tolist(),
            "delta_lo": self.delta_lo.tolist(),
            "delta_hi": self.delta_hi.tolist(),
            "cap": self.cap,
            "budget": self.budget,
            "costs": self.costs.to_dict(),
        }


def build_gp(problem: AllocationProblem) -> GPForm:
    """Assemble the allocation GP in standard form.

    Frozen rates (equal bounds) enter as constants. The returned form carries
    index maps in ``meta``: ``beta`` and ``delta_hat`` hold the variable index
    of each rate (``-1`` when frozen), ``u`` and ``lambda_hat`` likewise.
    """
    g = problem.graph
    n = g.node_count
    names = ["lambda_hat"]
    lam = 0
    beta_idx = np.full(problem.n_beta, -1, dtype=np.int64)
    for k in range(problem.n_beta):
        if problem.prevention[k] is not None:
            beta_idx[k] = len(names)
            names.append(f"beta[{k}]")
    dh_idx = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        if problem.correction[i] is not None:
            dh_idx[i] = len(names)
            names.append(f"delta_hat[{i}]")
    u_idx = np.arange(len(names), len(names) + n)
    names.extend(f"u[{i}]" for i in range(n))

    gp = GPForm(names, Posynomial([Monomial(1.0, {lam: 1.0})]))

    # eigenvalue constraints, one per node
    adj = g.adjacency()
    edge_pos = {}
    if not problem.node_level:
        for e, (s, d) in enumerate(zip(g.sources.tolist(), g.targets.tolist())):
            edge_pos[(s, d)] = e
    for i in range(n):
        terms = []
        lo, hi = adj.indptr[i], adj.indptr[i + 1]
        for j, a in zip(adj.indices[lo:hi].tolist(), adj.data[lo:hi].tolist()):
            if problem.node_level:
                k, coef = i, a
            else:
                k, coef = edge_pos[(j, i)], 1.0
            exps = {} if j == i else {int(u_idx[j]): 1.0, int(u_idx[i]): -1.0}
            if beta_idx[k] >= 0:
                exps[int(beta_idx[k])] = 1.0
            else:
                coef *= problem.beta_hi[k]
            exps[lam] = -1.0
            terms.append(Monomial(coef, exps))
        if dh_idx[i] >= 0:
            terms.append(Monomial(1.0, {int(dh_idx[i]): 1.0, lam: -1.0}))
        else:
            terms.append(Monomial(problem.cap - problem.delta_lo[i], {lam: -1.0}))
        gp.add_le(f"eigen[{i}]", Posynomial(terms))

    # budget: posynomial part <= budget - offsets
    budget_terms = []
    rhs = problem.budget
    for fams, idx in ((problem.prevention, beta_idx), (problem.correction, dh_idx)):
        for k, fam in enumerate(fams):
            if fam is None:
                continue
            for c, a in fam.terms:
                if not c > 0:
                    raise GPBuildError(f"{fam.tag} term ({c!r}, {a!r}) is not posynomial")
                budget_terms.append(Monomial(c, {int(idx[k]): a}))
            rhs -= fam.offset
    if budget_terms:
        if not rhs > 0:
            raise InfeasibleBudgetError(problem.budget, problem.baseline_cost)
        gp.add_le("budget", Posynomial(budget_terms), Monomial(rhs))

    # boxes
    for k in range(problem.n_beta):
        if beta_idx[k] >= 0:
            j = int(beta_idx[k])
            gp.add_le(f"beta_hi[{k}]", Monomial(1.0 / problem.beta_hi[k], {j: 1.0}))
            gp.add_le(f"beta_lo[{k}]", Monomial(problem.beta_lo[k], {j: -1.0}))
    for i in range(n):
        if dh_idx[i] >= 0:
            j = int(dh_idx[i])
            gp.add_le(f"delta_hat_hi[{i}]",
                      Monomial(1.0 / (problem.cap - problem.delta_lo[i]), {j: 1.0}))
            gp.add_le(f"delta_hat_lo[{i}]",
                      Monomial(problem.cap - problem.delta_hi[i], {j: -1.0}))

    # fix the scale of u
    gp.add_eq("u_scale", Monomial(1.0, {int(u_idx[0]): 1.0}))
    reducible = not is_strongly_connected(g)
    if reducible:
        for i in range(1, n):
            j = int(u_idx[i])
            gp.add_le(f"u_hi[{i}]", Monomial(1.0 / U_GUARD, {j: 1.0}))
            gp.add_le(f"u_lo[{i}]", Monomial(1.0 / U_GUARD, {j: -1.0}))

    gp.meta.update(lambda_hat=lam, beta=beta_idx, delta_hat=dh_idx, u=u_idx,
                   budget_rhs=rhs, reducible=reducible)
    return gp


@dataclass
class CertificationReport:
    """Independent checks of an allocation.

    ``eigen_slack[i]`` is ``(lambda_hat u_i - (B u)_i - delta_hat_i u_i) /
    (lambda_hat u_i)``; nonnegative slack certifies ``rho(B + D_hat) <=
    lambda_hat`` by the Collatz-Wielandt bound.
    """

    passed: bool
    eigen_slack: np.ndarray
    min_eigen_slack: float
    budget_residual: float
    bound_violation: float
    spectral_epsilon: float
    reported_epsilon: float
    exactness_gap: float
    strongly_connected: bool
    tolerance: float
    violations: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "eigen_slack": self.eigen_slack.tolist(),
            "min_eigen_slack": self.min_eigen_slack,
            "budget_residual": self.budget_residual,
            "bound_violation": self.bound_violation,
            "spectral_epsilon": self.spectral_epsilon,
            "reported_epsilon": self.reported_epsilon,
            "exactness_gap": self.exactness_gap,
            "strongly_connected": self.strongly_connected,
            "tolerance": self.tolerance,
            "violations": list(self.violations),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CertificationReport":
        d = dict(d)
        d["eigen_slack"] = np.asarray(d["eigen_slack"], dtype=float)
        return cls(**d)


@dataclass
class AllocationResult:
    beta_star: np.ndarray
    delta_star: np.ndarray
    epsilon_star: float
    lambda_hat_star: float
    perron_u: np.ndarray
    cap: float
    parameterization: str
    prevention_spend: np.ndarray
    correction_spend: np.ndarray
    solver_stats: dict = field(default_factory=dict)
    certification: CertificationReport | None = None

    @property
    def total_prevention(self) -> float:
        return float(self.prevention_spend.sum())

    @property
    def total_correction(self) -> float:
        return float(self.correction_spend.sum())

    @property
    def total_spend(self) -> float:
        return self.total_prevention + self.total_correction

    def to_dict(self) -> dict:
        return {
            "parameterization": self.parameterization,
            "beta_star": self.beta_star.tolist(),
            "delta_star": self.delta_star.tolist(),
            "epsilon_star": self.epsilon_star,
            "lambda_hat_star": self.lambda_hat_star,
            "perron_u": self.perron_u.tolist(),
            "cap": self.cap,
            "spend": {
                "prevention": self.prevention_spend.tolist(),
                "correction": self.correction_spend.tolist(),
                "total_prevention": self.total_prevention,
                "total_correction": self.total_correction,
                "total": self.total_spend,
            },
            "solver_stats": self.solver_stats,
            "certification": None if self.certification is None else self.certification.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AllocationResult":
        cert = d.get("certification")
        return cls(
            beta_star=np.asarray(d["beta_star"], dtype=float),
            delta_star=np.asarray(d["delta_star"], dtype=float),
            epsilon_star=float(d["epsilon_star"]),
            lambda_hat_star=float(d["lambda_hat_star"]),
            perron_u=np.asarray(d["perron_u"], dtype=float),
            cap=float(d["cap"]),
            parameterization=d["parameterization"],
            prevention_spend=np.asarray(d["spend"]["prevention"], dtype=float),
            correction_spend=np.asarray(d["spend"]["correction"], dtype=float),
            solver_stats=dict(d.get("solver_stats", {})),
            certification=None if cert is None else CertificationReport.from_dict(cert),
        )


def _interpolated_rates(problem: AllocationProblem, s: float):
    """Rates a fraction ``s`` of the way (in log space) from cheapest to strongest."""
    beta = problem.beta_hi ** (1 - s) * problem.beta_lo ** s
    dh_cheap = problem.cap - problem.delta_lo
    dh_strong = problem.cap - problem.delta_hi
    delta = problem.cap - dh_cheap ** (1 - s) * dh_strong ** s
    # frozen rates stay put; guard against rounding at the box edges
    beta = np.clip(beta, problem.beta_lo, problem.beta_hi)
    delta = np.clip(delta, problem.delta_lo, problem.delta_hi)
    return beta, delta


def _starting_rates(problem: AllocationProblem):
    baseline = problem.baseline_cost
    target = baseline + 0.5 * (problem.budget - baseline)

    def cost(s):
        p, c = problem.spend(*_interpolated_rates(problem, s))
        return p.sum() + c.sum()

    lo, hi = 0.0, 0.5
    if cost(hi) <= target:
        return _interpolated_rates(problem, hi)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if cost(mid) <= target:
            lo = mid
        else:
            hi = mid
    return _interpolated_rates(problem, lo)


def _baseline_result(problem: AllocationProblem, reason: str) -> AllocationResult:
    beta, delta = problem.baseline_beta, problem.baseline_delta
    b = problem.rate_matrix(beta)
    dh = problem.cap - delta
    res = spectral_radius((b + sp.diags(dh)).tocsr())
    u = res.vector / res.vector[0] if res.vector[0] > 0 else res.vector
    lam = res.value
    prev, corr = problem.spend(beta, delta)
    return AllocationResult(
        beta_star=beta, delta_star=delta, epsilon_star=problem.cap - lam,
        lambda_hat_star=lam, perron_u=u, cap=problem.cap,
        parameterization=problem.parameterization, prevention_spend=prev,
        correction_spend=corr, solver_stats={"method": reason, "iterations": res.iterations},
    )


def solve(problem: AllocationProblem, tol: float = 1e-7, cert_tol: float = 1e-6) -> AllocationResult:
    """Find the allocation maximising the decay rate within the budget.

    Parameters
    ----------
    problem : AllocationProblem
    tol : float
        Target bound on the suboptimality of ``lambda_hat`` (absolute).
    cert_tol : float
        Tolerance of the attached :func:`certify` report.

    Returns
    -------
    AllocationResult
        With ``certification`` filled in. A failed certification does not
        raise; inspect ``result.certification.passed``.

    Raises
    ------
    InfeasibleBudgetError
        When even the unprotected allocation costs more than the budget.
    SolverError
        When the barrier method fails to converge.
    """
    baseline = problem.baseline_cost
    slack = 1e-12 * max(1.0, abs(problem.budget))
    if problem.budget < baseline - slack:
        raise InfeasibleBudgetError(problem.budget, baseline)
    free = any(f is not None for f in problem.prevention) or any(
        f is not None for f in problem.correction)
    if not free or problem.budget <= baseline + slack:
        result = _baseline_result(problem, "baseline" if free else "no-free-variables")
        result.certification = certify(result, problem, tol=cert_tol)
        return result

    gp = build_gp(problem)
    meta = gp.meta
    cf = log_transform(gp)
    beta0, delta0 = _starting_rates(problem)
    dh0 = problem.cap - delta0
    m0 = (problem.rate_matrix(beta0) + sp.diags(dh0)).toarray()
    eta = 1e-2 * float(m0.max())
    u0 = spectral_radius(m0 + eta).vector
    u0 = u0 / u0[0]
    if meta["reducible"]:
        u0 = np.clip(u0, 1e-3 / U_GUARD, 1e-3 * U_GUARD)
    lam0 = 1.01 * float(np.max((m0 @ u0) / u0))

    y0 = np.zeros(gp.n_variables)
    y0[meta["lambda_hat"]] = math.log(lam0)
    free_b = meta["beta"] >= 0
    y0[meta["beta"][free_b]] = np.log(beta0[free_b])
    free_d = meta["delta_hat"] >= 0
    y0[meta["delta_hat"][free_d]] = np.log(dh0[free_d])
    y0[meta["u"]] = np.log(u0)

    # the barrier gap bounds the error in log(lambda_hat)
    # the budget binds whenever full protection is out of reach
    tighten = None
    if "budget" in cf.constraint_names and problem.budget < problem.full_protection_cost:
        tighten = {"budget": tol / max(meta["budget_rhs"], 1.0)}
    br = barrier_solve(cf, y0, tol=tol / max(lam0, 1.0), tighten=tighten)
    x = np.exp(br.y)
    beta = problem.beta_hi.copy()
    beta[free_b] = x[meta["beta"][free_b]]
    beta = np.clip(beta, problem.beta_lo, problem.beta_hi)
    dh = problem.cap - problem.delta_lo
    dh[free_d] = x[meta["delta_hat"][free_d]]
    delta = np.clip(problem.cap - dh, problem.delta_lo, problem.delta_hi)
    lam = float(x[meta["lambda_hat"]])
    u = x[meta["u"]]
    prev, corr = problem.spend(beta, delta)
    names = cf.constraint_names
    budget_dual = float(br.duals[names.index("budget")]) if "budget" in names else 0.0
    stats = {
        "method": "barrier",
        "outer_iterations": br.outer_iterations,
        "newton_iterations": br.newton_iterations,
        "duality_gap": br.gap,
        "kkt_residual": br.kkt_residual,
        "max_constraint": br.max_constraint,
        "equality_residual": br.equality_residual,
        "budget_dual": budget_dual,
        "n_variables": gp.n_variables,
        "n_constraints": len(names),
    }
    result = AllocationResult(
        beta_star=beta, delta_star=delta, epsilon_star=problem.cap - lam,
        lambda_hat_star=lam, perron_u=u, cap=problem.cap,
        parameterization=problem.parameterization, prevention_spend=prev,
        correction_spend=corr, solver_stats=stats,
    )
    result.certification = certify(result, problem, tol=cert_tol)
    return result


def certify(result: AllocationResult, problem: AllocationProblem,
            tol: float = 1e-6) -> CertificationReport:
    """Check an allocation without trusting the solver.

    Verifies the Perron certificate ``B u + D_hat u <= lambda_hat u``
    componentwise, the budget, the rate bounds, and compares the reported
    decay rate with a fresh spectral computation of ``-lambda_1(B - D)``.
    Exact agreement is only required on strongly connected graphs; for
    reducible graphs the certificate is a valid bound and the gap is
    reported.
    """
    beta = np.asarray(result.beta_star, dtype=float)
    delta = np.asarray(result.delta_star, dtype=float)
    u = np.asarray(result.perron_u, dtype=float)
    lam = float(result.lambda_hat_star)
    b = problem.rate_matrix(beta)
    dh = problem.cap - delta
    lhs = b @ u + dh * u
    with np.errstate(divide="ignore", invalid="ignore"):
        slack = (lam * u - lhs) / (lam * u)
    slack = np.where(np.isfinite(slack), slack, -np.inf)
    violations = []
    min_slack = float(slack.min())
    if min_slack < -tol:
        violations.append(f"eigen certificate violated at node {int(np.argmin(slack))} "
                          f"(slack {min_slack:.3e})")

    bound = max(
        float(np.max(problem.beta_lo - beta)), float(np.max(beta - problem.beta_hi)),
        float(np.max(problem.delta_lo - delta)), float(np.max(delta - problem.delta_hi)),
    )
    if bound > tol:
        violations.append(f"rate bounds violated by {bound:.3e}")
    try:
        prev, corr = problem.spend(np.clip(beta, problem.beta_lo, problem.beta_hi),
                                   np.clip(delta, problem.delta_lo, problem.delta_hi))
        spent = float(prev.sum() + corr.sum())
    except DomainError:
        spent = math.inf
    budget_residual = problem.budget - spent
    if budget_residual < -tol:
        violations.append(f"budget exceeded by {-budget_residual:.3e}")

    spectral_eps = -dominant_metzler_eigenvalue(b, delta).value
    reported = float(result.epsilon_star)
    gap = spectral_eps - reported
    sc = is_strongly_connected(problem.graph)
    if abs(reported - (problem.cap - lam)) > tol:
        violations.append("epsilon_star != cap - lambda_hat")
    if sc and abs(gap) > tol:
        violations.append(f"decay rate differs from spectral value by {gap:.3e}")
    if not sc and gap < -tol:
        violations.append(f"reported decay rate exceeds spectral value by {-gap:.3e}")
    return CertificationReport(
        passed=not violations, eigen_slack=slack, min_eigen_slack=min_slack,
        budget_residual=budget_residual, bound_violation=bound,
        spectral_epsilon=spectral_eps, reported_epsilon=reported, exactness_gap=gap,
        strongly_connected=sc, tolerance=tol, violations=violations,
    )
