"""Second-order moment identities for elliptical laws.

``E[X_1^2 f(X)]`` is rewritten as expectations of ``f``, its gradient and its
Hessian under the base law ``X`` and the associated laws ``X*`` and ``X**``.
The inner expectations are computed by common-random-number Monte Carlo or by
quadrature; the coefficient arithmetic is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .elliptical import CHUNK_SIZE, EllipticalDistribution, uniform_stream
from .errors import (
    DimensionError,
    FamilyMismatchError,
    MomentNonexistenceError,
    NotPositiveDefiniteError,
    NonFiniteValueError,
    SingularFactorError,
)
from .generators import FamilyKind
from .linalg import SymMatrix, as_sym, cholesky, psd_factor
from .oracles import quad_expectation
from .smooth import SmoothFunction, monomial, permuted, power_times

__all__ = [
    "Budget",
    "MomentEstimate",
    "InnerExpectations",
    "inner_expectations",
    "combine_thm1",
    "combine_thm2",
    "stein_first_moment",
    "x1sq_moment_thm1",
    "x1sq_moment_thm2",
    "product_moment",
    "normal_product_moment",
    "NormalMomentTable",
    "normal_power_moment",
]

METHODS = ("thm1", "thm2", "stein", "mc-direct", "quadrature", "isserlis", "recursion")


@dataclass(frozen=True)
class Budget:
    """How inner expectations are evaluated.

    ``method="mc"`` draws ``samples`` points from seed ``seed``;
    ``method="quadrature"`` uses ``nodes_per_dim`` radial and angular nodes
    and is limited to ``n <= 3``.
    """

    method: str = "mc"
    samples: int = 100_000
    seed: int = 0
    nodes_per_dim: int = 48
    workers: int = 1

    def __post_init__(self):
        if self.method not in ("mc", "quadrature"):
            raise ValueError(f"unknown budget method {self.method!r}")
        if self.method == "mc" and self.samples < 2:
            raise ValueError("Monte Carlo budget needs at least 2 samples")
        if self.nodes_per_dim < 2:
            raise ValueError("nodes_per_dim must be at least 2")

    @classmethod
    def from_dict(cls, spec: dict) -> "Budget":
        known = {"method", "samples", "seed", "nodes_per_dim", "workers"}
        extra = set(spec) - known
        if extra:
            raise ValueError(f"unknown budget keys {sorted(extra)}")
        return cls(**spec)


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    stderr: float
    method: str
    breakdown: Optional[dict] = field(default=None, compare=False)

    def __post_init__(self):
        if not self.stderr >= 0.0:
            raise ValueError("stderr must be non-negative")
        if self.method not in METHODS:
            raise ValueError(f"unknown method tag {self.method!r}")


@dataclass(frozen=True)
class InnerExpectations:
    """``E f(X)``, ``E f(X*)``, ``E grad f(X*)`` and ``E Hess f(X**)``."""

    f_x: float
    f_star: float
    grad_star: np.ndarray
    hess_dstar: np.ndarray


# ---------------------------------------------------------------------------
# coefficient algebra


def _col(sigma: SymMatrix, k: int = 0) -> np.ndarray:
    return sigma.array[:, k]


def combine_thm1(inner: InnerExpectations, sigma, mu1: float, b_star: float, b_dstar: float) -> dict:
    """The four summands of the ``b*``/``b**`` form."""
    s = _col(as_sym(sigma))
    return {
        "scale_f_star": s[0] * b_star * inner.f_star,
        "hessian_dstar": b_dstar * float(s @ inner.hess_dstar @ s),
        "gradient_star": 2.0 * mu1 * b_star * float(s @ inner.grad_star),
        "location_f": mu1 * mu1 * inner.f_x,
    }


def combine_thm2(inner: InnerExpectations, sigma, mu1: float, phi_slope: float, phi_star_slope: float) -> dict:
    """The same four summands written through characteristic-generator slopes."""
    s = _col(as_sym(sigma))
    return {
        "scale_f_star": -phi_slope * s[0] * inner.f_star,
        "hessian_dstar": phi_slope * phi_star_slope * float(s @ inner.hess_dstar @ s),
        "gradient_star": -2.0 * mu1 * phi_slope * float(s @ inner.grad_star),
        "location_f": mu1 * mu1 * inner.f_x,
    }


def _total(parts: dict) -> float:
    for k, v in parts.items():
        parts[k] = float(v)
    return math.fsum(parts.values())


# ---------------------------------------------------------------------------
# inner expectations


def _levels(d: EllipticalDistribution, need_dstar: bool):
    if d.level != 0:
        raise ValueError("moment identities are stated for a base law (level 0)")
    d.family.require(2 if need_dstar else 1)
    star = d.at_level(1)
    dstar = d.at_level(2) if need_dstar else None
    return star, dstar


def _finite(a: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NonFiniteValueError(f"{what} produced NaN or infinity")
    return a


def _mc_terms(d, f: SmoothFunction, budget: Budget, weights: dict, need_dstar: bool):
    """Per-draw linear combination of the inner integrands under shared draws.

    ``weights`` maps ``"f_x"``, ``"f_star"``, ``"grad_star"`` (vector) and
    ``"hess_dstar"`` (pair ``(a, s)`` for ``a s' H s``) to coefficients.
    Returns the per-part sample means and the standard error of their sum.
    """
    star, dstar = _levels(d, need_dstar)
    v, u = uniform_stream(budget.seed, budget.samples, d.n, budget.workers)
    total = np.zeros(budget.samples)
    sums = {k: 0.0 for k in weights}
    for start in range(0, budget.samples, CHUNK_SIZE):
        sl = slice(start, start + CHUNK_SIZE)
        vs, us = v[sl], u[sl]
        if weights.get("f_x"):
            part = weights["f_x"] * _finite(f.value(d.transform(vs, us)), "f(X)")
            total[sl] += part
            sums["f_x"] += part.sum()
        xs = star.transform(vs, us)
        if weights.get("f_star"):
            part = weights["f_star"] * _finite(f.value(xs), "f(X*)")
            total[sl] += part
            sums["f_star"] += part.sum()
        w = weights.get("grad_star")
        if w is not None and np.any(w):
            part = _finite(f.gradient(xs), "grad f(X*)") @ w
            total[sl] += part
            sums["grad_star"] += part.sum()
        coef, s = weights.get("hess_dstar", (0.0, None))
        if coef and np.any(s):
            h = _finite(f.hessian(dstar.transform(vs, us)), "Hess f(X**)")
            part = coef * np.einsum("kij,i,j->k", h, s, s)
            total[sl] += part
            sums["hess_dstar"] += part.sum()
    means = {k: val / budget.samples for k, val in sums.items()}
    stderr = float(np.std(total, ddof=1) / math.sqrt(budget.samples))
    return means, stderr


def inner_expectations(d: EllipticalDistribution, f: SmoothFunction, budget: Budget,
                       need_dstar: bool = True) -> InnerExpectations:
    """Evaluate all inner expectations separately (no error estimate)."""
    n = d.n
    star, dstar = _levels(d, need_dstar)
    if f.is_constant:
        c = f.constant_value
        return InnerExpectations(c, c, np.zeros(n), np.zeros((n, n)))

    def ev(law, h):
        if budget.method == "quadrature":
            return quad_expectation(law, h, budget.nodes_per_dim)
        out = np.asarray(h(law.sample(budget.seed, budget.samples, budget.workers)))
        return np.mean(_finite(out, "integrand"), axis=0)

    hess = ev(dstar, f.hessian) if need_dstar else np.zeros((n, n))
    return InnerExpectations(float(ev(d, f.value)), float(ev(star, f.value)),
                             np.asarray(ev(star, f.gradient), dtype=float), np.asarray(hess, dtype=float))


def _coefficients(d: EllipticalDistribution, form: str):
    s = _col(d.sigma)
    mu1 = float(d.mu[0])
    k = d.constants
    if form == "thm1":
        return {"f_x": mu1 * mu1, "f_star": s[0] * k.b_star,
                "grad_star": 2.0 * mu1 * k.b_star * s, "hess_dstar": (k.b_dstar, s)}
    slope, slope_star = k.phi_slope, k.phi_star_slope
    return {"f_x": mu1 * mu1, "f_star": -slope * s[0],
            "grad_star": -2.0 * mu1 * slope * s, "hess_dstar": (slope * slope_star, s)}


_PART_NAMES = {"f_x": "location_f", "f_star": "scale_f_star", "grad_star": "gradient_star",
               "hess_dstar": "hessian_dstar"}


def _x1sq(d: EllipticalDistribution, f: SmoothFunction, budget: Budget, form: str) -> MomentEstimate:
    f.validate(d.n)
    combine = combine_thm1 if form == "thm1" else combine_thm2
    k = d.constants
    args = (k.b_star, k.b_dstar) if form == "thm1" else (k.phi_slope, k.phi_star_slope)
    if f.is_constant:
        # only b* enters, so the level-2 law is not required
        _levels(d, need_dstar=False)
        c, n = f.constant_value, d.n
        inner = InnerExpectations(c, c, np.zeros(n), np.zeros((n, n)))
        if form == "thm2" and d.family.depth < 2:
            args = (k.phi_slope, 0.0)
        elif d.family.depth < 2:
            args = (k.b_star, 0.0)
        parts = combine(inner, d.sigma, float(d.mu[0]), *args)
        return MomentEstimate(_total(parts), 0.0, form, parts)
    if budget.method == "quadrature":
        if not d.factor.full_rank:
            raise SingularFactorError("quadrature needs a full-rank Sigma; use a Monte Carlo budget")
        inner = inner_expectations(d, f, budget)
        parts = combine(inner, d.sigma, float(d.mu[0]), *args)
        return MomentEstimate(_total(parts), 0.0, form, parts)
    weights = _coefficients(d, form)
    means, stderr = _mc_terms(d, f, budget, weights, need_dstar=True)
    parts = {_PART_NAMES[key]: means.get(key, 0.0) for key in _PART_NAMES}
    return MomentEstimate(_total(parts), stderr, form, parts)


def _swap(n: int, k: int) -> np.ndarray:
    perm = np.arange(n)
    perm[0], perm[k] = k, 0
    return perm


def _relabel(d: EllipticalDistribution, f: Optional[SmoothFunction], index: int):
    """Move coordinate ``index`` to position 0 in both ``d`` and ``f``."""
    if index == 0:
        return d, f
    if not 0 <= index < d.n:
        raise DimensionError(f"coordinate index {index} out of range for n = {d.n}")
    perm = _swap(d.n, index)
    sig = d.sigma.array[np.ix_(perm, perm)]
    d2 = EllipticalDistribution(d.mu[perm], SymMatrix.from_array(sig), d.family, d.triple, d.constants,
                                _factor_for(sig), d.level)
    return d2, (permuted(f, perm) if f is not None else None)


def _factor_for(sig: np.ndarray):
    try:
        return cholesky(sig)
    except NotPositiveDefiniteError:
        return psd_factor(sig)


# ---------------------------------------------------------------------------
# public identities


def x1sq_moment_thm1(d: EllipticalDistribution, f: SmoothFunction, budget: Budget = Budget(),
                     index: int = 0) -> MomentEstimate:
    """``E[X_k^2 f(X)]`` through the ``b*``, ``b**`` form.

    Parameters
    ----------
    d : EllipticalDistribution
        Base law with positive definite ``Sigma``.
    f : SmoothFunction
        Integrand factor. The caller asserts the boundary terms of the
        integration by parts vanish (``f.regular``).
    budget : Budget
        How the inner expectations are computed.
    index : int
        Coordinate ``k`` (zero-based); handled by relabelling.

    Returns
    -------
    MomentEstimate
        ``breakdown`` holds the four summands.  A constant ``f`` is evaluated
        exactly with ``stderr = 0``.
    """
    if not d.factor.full_rank:
        raise SingularFactorError("the b*/b** form needs positive definite Sigma; use x1sq_moment_thm2")
    d, f = _relabel(d, f, index)
    return _x1sq(d, f, budget, "thm1")


def x1sq_moment_thm2(d: EllipticalDistribution, f: SmoothFunction, budget: Budget = Budget(),
                     index: int = 0) -> MomentEstimate:
    """``E[X_k^2 f(X)]`` through characteristic-generator slopes.

    Valid for positive semidefinite ``Sigma`` since nothing is divided by
    ``Sigma``; with a Monte Carlo budget draws use the semidefinite factor.
    """
    d, f = _relabel(d, f, index)
    return _x1sq(d, f, budget, "thm2")


def stein_first_moment(d: EllipticalDistribution, f: SmoothFunction, budget: Budget = Budget(),
                       index: int = 0) -> MomentEstimate:
    """``E[X_k f(X)] = sum_i b* sigma_ki E[d_i f(X*)] + mu_k E[f(X)]``."""
    d, f = _relabel(d, f, index)
    f.validate(d.n)
    _levels(d, need_dstar=False)
    s = _col(d.sigma)
    mu1 = float(d.mu[0])
    b = d.constants.b_star
    if f.is_constant:
        parts = {"gradient_star": 0.0, "location_f": mu1 * f.constant_value}
        return MomentEstimate(_total(parts), 0.0, "stein", parts)
    if budget.method == "quadrature":
        inner = inner_expectations(d, f, budget, need_dstar=False)
        parts = {"gradient_star": b * float(s @ inner.grad_star), "location_f": mu1 * inner.f_x}
        return MomentEstimate(_total(parts), 0.0, "stein", parts)
    means, stderr = _mc_terms(d, f, budget, {"f_x": mu1, "grad_star": b * s}, need_dstar=False)
    parts = {"gradient_star": means.get("grad_star", 0.0), "location_f": means.get("f_x", 0.0)}
    return MomentEstimate(_total(parts), stderr, "stein", parts)


# ---------------------------------------------------------------------------
# product moments


def _check_exponents(e, n: int) -> tuple:
    e = tuple(int(k) for k in e)
    if len(e) != n:
        raise DimensionError(f"exponent vector has length {len(e)}, expected {n}")
    if any(k < 0 for k in e):
        raise ValueError("exponents must be non-negative")
    return e


def product_moment(d: EllipticalDistribution, e, budget: Budget = Budget(), form: str = "derived") -> MomentEstimate:
    """``E[prod X_i^{e_i}]`` with ``e_1 >= 2``.

    Normal laws use the exact recursion.  Other families apply the
    ``b*``/``b**`` identity to ``f = x_1^{e_1 - 2} prod_{k>1} x_k^{e_k}``.
    ``form="display"`` evaluates the ``2 mu_1 b* sigma_11 (e_1 - 2)`` summand
    under ``X**`` instead of ``X*``; the two agree when ``mu_1 = 0``.
    """
    e = _check_exponents(e, d.n)
    if e[0] < 2:
        raise ValueError("the leading exponent must be at least 2")
    if form not in ("derived", "display"):
        raise ValueError(f"unknown form {form!r}")
    deg = sum(e)
    fam = d.family
    if fam.kind is FamilyKind.STUDENT_T and deg >= fam.p:
        raise MomentNonexistenceError(f"moment of degree {deg} does not exist for {fam}")
    if fam.kind is FamilyKind.NORMAL:
        return MomentEstimate(normal_product_moment(d.mu, d.sigma, e), 0.0, "recursion")
    rest = (e[0] - 2,) + e[1:]
    est = x1sq_moment_thm1(d, monomial(rest), budget)
    if form == "derived" or e[0] < 3 or d.mu[0] == 0.0:
        return est
    # alternative form: the x_1 part of the gradient summand taken under X**
    lower = (e[0] - 3,) + e[1:]
    coef = 2.0 * float(d.mu[0]) * d.b_star * d.sigma[0, 0] * (e[0] - 2)
    g = monomial(lower)
    star, dstar = d.at_level(1), d.at_level(2)
    if budget.method == "quadrature":
        shift = coef * (quad_expectation(dstar, g.value, budget.nodes_per_dim)
                        - quad_expectation(star, g.value, budget.nodes_per_dim))
        err = est.stderr
    else:
        v, u = uniform_stream(budget.seed, budget.samples, d.n, budget.workers)
        diff = g.value(dstar.transform(v, u)) - g.value(star.transform(v, u))
        shift = coef * float(np.mean(diff))
        err = math.hypot(est.stderr, abs(coef) * float(np.std(diff, ddof=1)) / math.sqrt(budget.samples))
    parts = dict(est.breakdown)
    parts["display_shift"] = shift
    return MomentEstimate(_total(parts), err, "thm1", parts)


class NormalMomentTable:
    """Memoised Gaussian product moments for one ``(mu, Sigma)``.

    The recursion picks the coordinate with the largest exponent ``k``.  If
    ``e_k >= 2`` it applies the ``E[X_k^2 f]`` identity with
    ``X* = X** = X`` to ``f = x_k^{e_k - 2} prod_{j != k} x_j^{e_j}``;
    otherwise all exponents are at most one and the first-moment identity
    lowers the degree by one.  Every step lowers the total degree.
    """

    def __init__(self, mu, sigma):
        self.mu = np.asarray(mu, dtype=float)
        self.sigma = as_sym(sigma).array
        if self.mu.shape != (self.sigma.shape[0],):
            raise DimensionError("mu and sigma sizes differ")
        self._memo: dict = {(0,) * self.mu.size: 1.0}

    def __call__(self, e) -> float:
        e = _check_exponents(e, self.mu.size)
        return self._get(e)

    def _get(self, e: tuple) -> float:
        hit = self._memo.get(e)
        if hit is None:
            hit = self._compute(e)
            self._memo[e] = hit
        return hit

    def _lower(self, e: tuple, i: int, count: int = 1):
        """Coefficient and value of ``d^count/dx_i^count`` applied to ``x^e``."""
        if e[i] < count:
            return 0.0, None
        coef = math.perm(e[i], count)
        q = list(e)
        q[i] -= count
        return float(coef), tuple(q)

    def _deriv(self, e: tuple, i: int) -> float:
        coef, q = self._lower(e, i)
        return coef * self._get(q) if coef else 0.0

    def _deriv2(self, e: tuple, i: int, j: int) -> float:
        if i == j:
            coef, q = self._lower(e, i, 2)
            return coef * self._get(q) if coef else 0.0
        c1, q = self._lower(e, i)
        if not c1:
            return 0.0
        c2, q = self._lower(q, j)
        return c1 * c2 * self._get(q) if c2 else 0.0

    def _compute(self, e: tuple) -> float:
        n = len(e)
        k = int(np.argmax(e))
        mk = self.mu[k]
        s = self.sigma[k]
        if e[k] == 1:
            f = list(e)
            f[k] = 0
            f = tuple(f)
            terms = [s[i] * self._deriv(f, i) for i in range(n)]
            terms.append(mk * self._get(f))
            return math.fsum(terms)
        f = list(e)
        f[k] -= 2
        f = tuple(f)
        ef = self._get(f)
        terms = [s[k] * ef, mk * mk * ef]
        for i in range(n):
            if s[i] == 0.0:
                continue
            terms.append(2.0 * mk * s[i] * self._deriv(f, i))
            for j in range(n):
                if s[j] != 0.0:
                    terms.append(s[i] * s[j] * self._deriv2(f, i, j))
        return math.fsum(terms)


def normal_product_moment(mu, sigma, e, table: Optional[NormalMomentTable] = None) -> float:
    """Exact ``E[prod X_i^{e_i}]`` for ``X ~ N(mu, Sigma)`` by recursion."""
    table = table if table is not None else NormalMomentTable(mu, sigma)
    return table(e)


def normal_power_moment(d: EllipticalDistribution, p1: int, f: SmoothFunction, budget: Budget = Budget(),
                        index: int = 0) -> MomentEstimate:
    """``E[X_k^{p1} f(X)]`` for a Normal law.

    Applies the ``E[X_1^2 g]`` identity to ``g = x_1^{p1 - 2} f`` with the
    full product rule, so the cross terms
    ``2 (p1 - 2) sigma_11 sum_j sigma_1j E[X_1^{p1 - 3} d_j f]`` are kept.
    """
    if d.family.kind is not FamilyKind.NORMAL:
        raise FamilyMismatchError(f"normal_power_moment needs a Normal law, got {d.family}")
    p1 = int(p1)
    if p1 < 2:
        raise ValueError("p1 must be at least 2")
    d, f = _relabel(d, f, index)
    f.validate(d.n)
    if f.is_constant and p1 > 2:
        e = (p1,) + (0,) * (d.n - 1)
        return MomentEstimate(f.constant_value * normal_product_moment(d.mu, d.sigma, e), 0.0, "recursion")
    return _x1sq(d, power_times(f, 0, p1 - 2), budget, "thm1" if d.factor.full_rank else "thm2")
