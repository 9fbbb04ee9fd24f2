"""Independent ground truth for the moment identities.

Nothing here uses the integration-by-parts identities: expectations come
from plain Monte Carlo or quadrature of ``h * pdf``, Gaussian product moments
from Wick pairings, and derivatives from central differences.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy import integrate

from .elliptical import EllipticalDistribution
from .errors import DegreeLimitError, DimensionError, MomentNonexistenceError, NonFiniteValueError, SingularFactorError
from .generators import FamilyKind
from .linalg import as_sym
from .smooth import FD_TOLERANCE, SmoothFunction, fd_gradient, fd_hessian

__all__ = [
    "McResult",
    "FdReport",
    "mc_expectation",
    "quad_expectation",
    "isserlis_moment",
    "pairings",
    "radial_moment",
    "elliptical_moment",
    "finite_diff_check",
]

ISSERLIS_MAX_DEGREE = 12
QUAD_MASS = 1e-10
_QUAD_BATCH = 1 << 20


@dataclass(frozen=True)
class McResult:
    mean: float
    stderr: float
    n_samples: int
    seed: int


def mc_expectation(d: EllipticalDistribution, h, samples: int, seed: int, workers: int = 1) -> McResult:
    """Plain Monte Carlo estimate of ``E[h(X)]`` with its standard error."""
    if samples < 2:
        raise ValueError("mc_expectation needs at least 2 samples")
    x = d.sample(seed, samples, workers)
    vals = np.asarray(h(x), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise NonFiniteValueError("integrand returned NaN or infinity on a draw")
    if np.all(vals == vals[0]):
        return McResult(float(vals[0]), 0.0, samples, seed)
    return McResult(float(np.mean(vals)), float(np.std(vals, ddof=1) / math.sqrt(samples)), samples, seed)


# ---------------------------------------------------------------------------
# quadrature


def _sphere_rule(n: int, m: int):
    """Nodes and weights averaging over the unit sphere in dimension ``n``."""
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([0.5, 0.5])
    if n == 2:
        k = 2 * m
        th = 2.0 * math.pi * (np.arange(k) + 0.5) / k
        return np.column_stack([np.cos(th), np.sin(th)]), np.full(k, 1.0 / k)
    z, wz = np.polynomial.legendre.leggauss(m)
    k = 2 * m
    ph = 2.0 * math.pi * (np.arange(k) + 0.5) / k
    zz, pp = np.meshgrid(z, ph, indexing="ij")
    s = np.sqrt(1.0 - zz**2)
    nodes = np.column_stack([(s * np.cos(pp)).ravel(), (s * np.sin(pp)).ravel(), zz.ravel()])
    w = (np.repeat(wz, k) / 2.0) / k
    return nodes, w


def _radial_rule(d: EllipticalDistribution, m: int):
    """Gauss-Legendre on geometric panels up to the 1 - QUAD_MASS quantile,
    plus one panel ``r = r_end / u`` for the remaining tail."""
    law = d.radial
    r_end = float(law.ppf(np.array([1.0 - QUAD_MASS]))[0])
    s = float(law.ppf(np.array([0.5]))[0]) / 2.0
    edges = [0.0, s]
    while edges[-1] < r_end:
        edges.append(edges[-1] * 2.0)
    x, w = np.polynomial.legendre.leggauss(m)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (a + b) + 0.5 * (b - a) * x)
        weights.append(0.5 * (b - a) * w)
    r_t = edges[-1]
    u = 0.5 + 0.5 * x
    nodes.append(r_t / u)
    weights.append(0.5 * w * r_t / u**2)
    r = np.concatenate(nodes)
    wr = np.concatenate(weights) * law.density(r)
    return r, wr


def quad_expectation(d: EllipticalDistribution, h, nodes_per_dim: int = 48):
    """Quadrature of ``E[h(X)]`` for ``n <= 3`` in whitened coordinates.

    With ``y = A^{-1}(x - mu)`` the density is spherical, so the integral
    splits into a radial Gauss-Legendre rule against the radial density and
    an angular rule on the unit sphere.  ``h`` may return extra trailing
    axes; the result then has those axes.
    """
    n = d.n
    if n > 3:
        raise DimensionError(f"quadrature expectation supports n <= 3, got n = {n}")
    if not d.factor.full_rank:
        raise SingularFactorError("quadrature needs a full-rank Sigma")
    r, wr = _radial_rule(d, nodes_per_dim)
    u, wu = _sphere_rule(n, nodes_per_dim)
    y = (r[:, None, None] * u[None, :, :]).reshape(-1, n)
    w = (wr[:, None] * wu[None, :]).ravel()
    x = d.mu + y @ d.factor.entries.T
    total = None
    for start in range(0, len(w), _QUAD_BATCH):
        sl = slice(start, start + _QUAD_BATCH)
        vals = np.asarray(h(x[sl]), dtype=float)
        part = np.tensordot(w[sl], vals, axes=(0, 0))
        total = part if total is None else total + part
    if not np.all(np.isfinite(total)):
        raise NonFiniteValueError("integrand returned NaN or infinity at a node")
    return float(total) if np.ndim(total) == 0 else total


# ---------------------------------------------------------------------------
# Gaussian product moments


def pairings(items):
    """All perfect matchings of ``items`` by first-element matching."""
    items = list(items)
    if not items:
        yield []
        return
    first = items[0]
    rest = items[1:]
    for i, other in enumerate(rest):
        for tail in pairings(rest[:i] + rest[i + 1 :]):
            yield [(first, other)] + tail


def _centered_moment(sig: np.ndarray, q: tuple, cache: dict) -> float:
    hit = cache.get(q)
    if hit is not None:
        return hit
    idx = [i for i, k in enumerate(q) for _ in range(k)]
    if len(idx) % 2:
        val = 0.0
    else:
        val = math.fsum(math.prod(sig[a, b] for a, b in pr) for pr in pairings(idx))
    cache[q] = val
    return val


def isserlis_moment(mu, sigma, e, _cache: dict | None = None) -> float:
    """``E[prod X_i^{e_i}]`` for ``X ~ N(mu, sigma)`` by Wick pairings.

    The location is handled by binomial expansion, the centred part by
    summing over all pair partitions of the index multiset.
    """
    mu = np.asarray(mu, dtype=float)
    sig = as_sym(sigma).array
    e = tuple(int(k) for k in e)
    if any(k < 0 for k in e):
        raise ValueError("exponents must be non-negative")
    if sum(e) > ISSERLIS_MAX_DEGREE:
        raise DegreeLimitError(f"total degree {sum(e)} exceeds {ISSERLIS_MAX_DEGREE}")
    cache = {} if _cache is None else _cache
    terms = []
    for q in product(*(range(k + 1) for k in e)):
        if sum(q) % 2:
            continue
        coef = 1.0
        for k, qk, m in zip(e, q, mu):
            coef *= math.comb(k, qk) * m ** (k - qk)
        if coef:
            terms.append(coef * _centered_moment(sig, q, cache))
    return math.fsum(terms)


# ---------------------------------------------------------------------------
# elliptical product moments through the radial representation


def radial_moment(d: EllipticalDistribution, m: int) -> float:
    """``E[R^m]`` by adaptive quadrature of the radial density."""
    fam = d.family
    if fam.kind is FamilyKind.STUDENT_T and m >= fam.p - 2 * d.level:
        raise MomentNonexistenceError(f"E[R^{m}] is infinite for {fam} at level {d.level}")
    dens = d.radial.density

    def integrand(r):
        return r**m * float(dens(np.array([r]))[0])

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        head, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=500)
        tail, _ = integrate.quad(integrand, 1.0, np.inf, epsabs=0.0, epsrel=1e-13, limit=500)
    return head + tail


def elliptical_moment(d: EllipticalDistribution, e) -> float:
    """Exact ``E[prod X_i^{e_i}]`` for any elliptical law.

    Uses ``X - mu = R A U`` and the fact that a Gaussian is the same
    construction with a chi radius: the centred moment of order ``q`` is the
    Gaussian one rescaled by ``E[R^|q|] / E[chi_n^|q|]``.
    """
    e = [int(k) for k in e]
    n = d.n
    zero = np.zeros(n)
    cache: dict = {}
    radial_cache: dict = {}
    total = []
    for q in product(*(range(k + 1) for k in e)):
        deg = sum(q)
        if deg % 2:
            continue
        coef = 1.0
        for k, qk, m in zip(e, q, d.mu):
            coef *= math.comb(k, qk) * m ** (k - qk)
        if not coef:
            continue
        if deg not in radial_cache:
            if deg == 0:
                radial_cache[deg] = 1.0
            else:
                chi = math.exp(0.5 * deg * math.log(2.0) + math.lgamma((n + deg) / 2.0) - math.lgamma(n / 2.0))
                radial_cache[deg] = radial_moment(d, deg) / chi
        gauss = isserlis_moment(zero, d.sigma, q, cache) if deg else 1.0
        total.append(coef * radial_cache[deg] * gauss)
    return math.fsum(total)


# ---------------------------------------------------------------------------
# derivative checks


@dataclass(frozen=True)
class FdReport:
    grad_deviation: float
    hess_deviation: float
    passed: bool


def _deviation(supplied, reference) -> float:
    worst = 0.0
    for a, b in zip(supplied, reference):
        scale = max(1.0, float(np.max(np.abs(b))))
        worst = max(worst, float(np.max(np.abs(a - b))) / scale)
    return worst


def finite_diff_check(f: SmoothFunction, points) -> FdReport:
    """Compare supplied derivatives with central differences at ``points``.

    Deviation per point is ``max|supplied - fd| / max(1, max|fd|)``; the check
    passes when the worst point is within ``1e-4``.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    g_dev = h_dev = 0.0
    if f.grad is not None:
        g_dev = _deviation(np.asarray(f.grad(x)), fd_gradient(f.eval, x, f.fd_scale))
    if f.hess is not None:
        h_dev = _deviation(np.asarray(f.hess(x)), fd_hessian(f.eval, x, f.fd_scale))
    return FdReport(g_dev, h_dev, g_dev <= FD_TOLERANCE and h_dev <= FD_TOLERANCE)
