"""Protection cost families.

Every family is an affine shift of a posynomial in the variable the geometric
program optimises over: the propagation rate ``beta`` for prevention and the
complementary recovery rate ``delta_hat = cap - delta`` for correction. The
shift (``offset``) is a constant that the GP builder moves to the budget side.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .exceptions import DomainError, FamilyMisuseError

__all__ = [
    "CostFamily",
    "ReciprocalVaccine",
    "WorkstationCost",
    "ReciprocalAntidote",
    "CustomPosynomial",
    "CostModel",
    "vaccine_cost",
    "antidote_cost",
    "workstation_cost",
    "inverse_cost",
    "make_family",
]

_REL = 1e-12


def _check_interval(value, lo, hi, what):
    slack = _REL * max(1.0, abs(lo), abs(hi))
    v = np.asarray(value, dtype=float)
    if np.any(v < lo - slack) or np.any(v > hi + slack) or np.any(~np.isfinite(v)):
        raise DomainError(f"{what} {value!r} outside [{lo!r}, {hi!r}]")


class CostFamily:
    """Base class: ``cost = sum_k c_k * x**a_k + offset`` with ``x`` the GP variable.

    Subclasses set ``kind`` ("prevention" or "correction"), the rate bounds
    ``lo``/``hi``, ``terms`` as ``(c_k, a_k)`` pairs and ``offset``. For
    correction families ``cap`` is the recovery ceiling and ``x = cap - rate``.
    """

    tag = "base"
    kind = "prevention"
    lo: float
    hi: float
    cap: float | None = None
    terms: tuple
    offset: float

    # -- variable mapping --------------------------------------------------
    def to_gp(self, rate):
        return rate if self.kind == "prevention" else self.cap - rate

    def from_gp(self, x):
        return x if self.kind == "prevention" else self.cap - x

    @property
    def gp_bounds(self) -> tuple[float, float]:
        if self.kind == "prevention":
            return self.lo, self.hi
        return self.cap - self.hi, self.cap - self.lo

    @property
    def cheapest_rate(self) -> float:
        """Rate reached with zero investment (``hi`` for beta, ``lo`` for delta)."""
        return self.hi if self.kind == "prevention" else self.lo

    @property
    def strongest_rate(self) -> float:
        return self.lo if self.kind == "prevention" else self.hi

    # -- evaluation ----------------------------------------------------------
    def gp_value(self, x):
        x = np.asarray(x, dtype=float)
        total = np.full_like(x, self.offset, dtype=float)
        for c, a in self.terms:
            total = total + c * x ** a
        return total if total.ndim else float(total)

    def __call__(self, rate):
        _check_interval(rate, self.lo, self.hi, "rate")
        return self.gp_value(self.to_gp(np.asarray(rate, dtype=float)))

    @property
    def min_spend(self) -> float:
        return float(self.gp_value(self.to_gp(self.cheapest_rate)))

    @property
    def max_spend(self) -> float:
        return float(self.gp_value(self.to_gp(self.strongest_rate)))

    def inverse(self, spend: float) -> float:
        """Rate whose cost equals ``spend``."""
        lo_s, hi_s = self.min_spend, self.max_spend
        _check_interval(spend, lo_s, hi_s, "spend")
        spend = min(max(float(spend), lo_s), hi_s)
        x_lo, x_hi = self.gp_bounds
        if len(self.terms) == 1:
            c, a = self.terms[0]
            x = ((spend - self.offset) / c) ** (1.0 / a)
            x = min(max(x, x_lo), x_hi)
        else:
            if spend == lo_s:
                x = x_hi
            elif spend == hi_s:
                x = x_lo
            else:
                x = brentq(lambda t: self.gp_value(t) - spend, x_lo, x_hi,
                           xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
        return float(self.from_gp(x))

    def descriptor(self) -> dict:
        """Structural description used by the GP builder and by config files."""
        return {
            "family": self.tag,
            "kind": self.kind,
            "variable": "beta" if self.kind == "prevention" else "delta_hat",
            "terms": [[float(c), float(a)] for c, a in self.terms],
            "offset": float(self.offset),
            "lo": float(self.lo),
            "hi": float(self.hi),
            "cap": None if self.cap is None else float(self.cap),
        }

    def __repr__(self):
        extra = "" if self.cap is None else f", cap={self.cap!r}"
        return f"{type(self).__name__}(lo={self.lo!r}, hi={self.hi!r}{extra})"


def _check_bounds(lo, hi, strict_positive=True):
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise DomainError("bounds must be finite")
    if strict_positive and lo <= 0:
        raise DomainError(f"lower bound must be positive, got {lo!r}")
    if not lo < hi:
        raise DomainError(f"need lo < hi, got [{lo!r}, {hi!r}]")


class ReciprocalVaccine(CostFamily):
    """``f(b) = (1/b - 1/hi) / (1/lo - 1/hi)``; zero at ``hi``, one at ``lo``."""

    tag = "reciprocal-vaccine"
    kind = "prevention"

    def __init__(self, lo: float, hi: float):
        lo, hi = float(lo), float(hi)
        _check_bounds(lo, hi)
        self.lo, self.hi = lo, hi
        scale = 1.0 / (1.0 / lo - 1.0 / hi)
        self.terms = ((scale, -1.0),)
        self.offset = -scale / hi


class WorkstationCost(CostFamily):
    """``f(b) = lo * (hi / b - 1) / (hi - lo)``.

    Numerically identical to :class:`ReciprocalVaccine`; kept as its own tag
    because budgets in the workstation setting count fully protected nodes.
    """

    tag = "workstation"
    kind = "prevention"

    def __init__(self, lo: float, hi: float):
        lo, hi = float(lo), float(hi)
        _check_bounds(lo, hi)
        self.lo, self.hi = lo, hi
        self.terms = ((lo * hi / (hi - lo), -1.0),)
        self.offset = -lo / (hi - lo)


class ReciprocalAntidote(CostFamily):
    """``g(d) = (1/(cap-d) - 1/(cap-lo)) / (1/(cap-hi) - 1/(cap-lo))``.

    With ``cap = 1`` this is the normalised antidote curve; it is a reciprocal
    of the complementary rate ``cap - d`` and hence posynomial in it.
    """

    tag = "reciprocal-antidote"
    kind = "correction"

    def __init__(self, lo: float, hi: float, cap: float = 1.0):
        lo, hi, cap = float(lo), float(hi), float(cap)
        _check_bounds(lo, hi)
        if not hi < cap:
            raise FamilyMisuseError(
                f"antidote family needs hi < cap; got hi={hi!r}, cap={cap!r}"
            )
        self.lo, self.hi, self.cap = lo, hi, cap
        inv_lo, inv_hi = 1.0 / (cap - lo), 1.0 / (cap - hi)
        scale = 1.0 / (inv_hi - inv_lo)
        self.terms = ((scale, -1.0),)
        self.offset = -scale * inv_lo


class CustomPosynomial(CostFamily):
    """User-supplied ``sum_k c_k x**a_k + offset``.

    Coefficients must be positive. Exponents must be negative so that the
    cost strictly decreases in ``x`` (more protection, lower ``x``, higher
    cost), which keeps the family invertible.
    """

    tag = "custom-posynomial"

    def __init__(self, terms: Sequence[Sequence[float]], lo: float, hi: float,
                 offset: float = 0.0, kind: str = "prevention", cap: float | None = None):
        lo, hi = float(lo), float(hi)
        _check_bounds(lo, hi)
        if kind not in ("prevention", "correction"):
            raise DomainError(f"kind must be 'prevention' or 'correction', got {kind!r}")
        if kind == "correction":
            if cap is None or not hi < cap:
                raise FamilyMisuseError("correction families need a cap above hi")
            cap = float(cap)
        parsed = []
        for k, term in enumerate(terms):
            c, a = float(term[0]), float(term[1])
            if not c > 0:
                raise DomainError(f"term {k}: coefficient must be positive, got {c!r}")
            if not a < 0:
                raise DomainError(f"term {k}: exponent must be negative, got {a!r}")
            parsed.append((c, a))
        if not parsed:
            raise DomainError("custom posynomial needs at least one term")
        self.terms = tuple(parsed)
        self.offset = float(offset)
        self.kind = kind
        self.lo, self.hi, self.cap = lo, hi, cap


def make_family(desc, lo: float, hi: float, cap: float | None = None) -> CostFamily:
    """Instantiate a family from a tag string or a config mapping."""
    if isinstance(desc, CostFamily):
        return desc
    if isinstance(desc, str):
        desc = {"family": desc}
    tag = desc["family"]
    if tag in ("reciprocal-vaccine", "vaccine"):
        return ReciprocalVaccine(lo, hi)
    if tag == "workstation":
        return WorkstationCost(lo, hi)
    if tag in ("reciprocal-antidote", "antidote"):
        return ReciprocalAntidote(lo, hi, 1.0 if cap is None else cap)
    if tag == "custom-posynomial":
        return CustomPosynomial(desc["terms"], lo, hi, offset=desc.get("offset", 0.0),
                                kind=desc.get("kind", "prevention"), cap=cap)
    raise DomainError(f"unknown cost family {tag!r}")


@dataclass(frozen=True)
class CostModel:
    """Which family prices prevention and which prices correction.

    ``prevention`` and ``correction`` are family tags or custom-posynomial
    mappings; per-element families are built from per-element bounds.
    """

    prevention: object = "reciprocal-vaccine"
    correction: object = "reciprocal-antidote"
    extra: dict = field(default_factory=dict)

    def prevention_family(self, lo, hi) -> CostFamily:
        desc = self.prevention
        if isinstance(desc, dict):
            desc = {"kind": "prevention", **desc}
        return make_family(desc, lo, hi)

    def correction_family(self, lo, hi, cap) -> CostFamily:
        desc = self.correction
        if isinstance(desc, dict):
            desc = {"kind": "correction", **desc}
        fam = make_family(desc, lo, hi, cap)
        if fam.kind != "correction":
            raise FamilyMisuseError(f"{fam.tag!r} cannot price correction resources")
        return fam

    def to_dict(self) -> dict:
        return {"prevention": self.prevention, "correction": self.correction}


# -- scalar conveniences -------------------------------------------------------

def vaccine_cost(beta, beta_lo: float, beta_hi: float):
    return ReciprocalVaccine(beta_lo, beta_hi)(beta)


def antidote_cost(delta, delta_lo: float, delta_hi: float):
    if delta_hi >= 1.0:
        raise FamilyMisuseError(
            f"the normalised antidote curve needs delta_hi < 1, got {delta_hi!r}"
        )
    return ReciprocalAntidote(delta_lo, delta_hi, cap=1.0)(delta)


def workstation_cost(beta, beta_lo: float, beta_hi: float):
    return WorkstationCost(beta_lo, beta_hi)(beta)


def inverse_cost(family: CostFamily, spend: float) -> float:
    return family.inverse(spend)
