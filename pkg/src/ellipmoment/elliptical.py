"""Elliptical distributions: density, radial law and reproducible sampling.

Draws use the stochastic representation ``X = mu + R * A @ U`` with ``U``
uniform on the unit sphere and ``R`` the Mahalanobis radius.  ``R`` is
always produced by inverting its CDF at a uniform variate, so the base law
and its associated laws can share the same uniforms (common random numbers).

Random streams follow a fixed partition plan: draw ``i`` belongs to chunk
``i // CHUNK_SIZE`` and each chunk has its own generator seeded from
``(seed, chunk_index)``.  Results therefore do not depend on how many
workers process the chunks.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special
from scipy.interpolate import PchipInterpolator

from .errors import NotPositiveDefiniteError, SingularFactorError, ValidityError
from .generators import (
    DensityGenerator,
    FamilyKind,
    GeneratorFamily,
    GeneratorTriple,
    NormalizingConstants,
    generator_triple,
    normalizing_constants,
    parse_family,
)
from .linalg import LowerFactor, SymMatrix, as_sym, cholesky, mahalanobis_half, psd_factor

__all__ = [
    "CHUNK_SIZE",
    "RadialLaw",
    "EllipticalDistribution",
    "radial_law",
    "pdf",
    "sample",
    "associated_distributions",
    "uniform_stream",
]

CHUNK_SIZE = 1 << 16
TABLE_NODES = 2048
TABLE_MASS = 1e-9


# ---------------------------------------------------------------------------
# radial laws


@dataclass(frozen=True, eq=False)
class RadialLaw:
    """Law of ``R = ||A^{-1}(X - mu)||``.

    ``sampler_kind`` is one of ``exact-normal``, ``exact-laplace``,
    ``exact-student`` or ``tabulated``.  ``cdf`` is exact whenever a closed
    form is known (also for some tabulated samplers), otherwise it is read off
    the same quadrature table that drives the sampler.
    """

    n: int
    generator: DensityGenerator = field(repr=False)
    sampler_kind: str
    cdf: Callable = field(repr=False)
    ppf: Callable = field(repr=False)
    cdf_grid: Optional[tuple] = field(default=None, repr=False)

    def density(self, r):
        return self.generator.density_of_radius(r)


class _RadialTable:
    """Tabulated CDF of a radial density on log-spaced nodes.

    Interpolation runs in ``(log r, logit F)`` coordinates with monotone
    cubics.  Below the first node ``F ~ r^n``; past the last node the
    survival function is extended exponentially.
    """

    def __init__(self, density: Callable, n: int, g0: float, k0: float):
        self.n = n
        self.density = density
        # F(r) ~ k0 g0 r^n / n near the origin
        r_lo = (TABLE_MASS * n / (k0 * g0)) ** (1.0 / n)
        r_hi = 1.0
        while self._survival(r_hi) > TABLE_MASS:
            r_hi *= 2.0
            if r_hi > 1e12:
                raise ValidityError("radial law has too heavy a tail to tabulate")
        r = np.logspace(math.log10(r_lo), math.log10(r_hi), TABLE_NODES)
        x, w = np.polynomial.legendre.leggauss(16)
        lo, hi = r[:-1], r[1:]
        half = 0.5 * (hi - lo)[:, None]
        pts = 0.5 * (hi + lo)[:, None] + half * x
        mass = np.sum(density(pts) * w, axis=1) * half[:, 0]
        f_lo = self._integral(0.0, r_lo)
        s_hi = self._survival(r_hi)
        cdf = f_lo + np.concatenate([[0.0], np.cumsum(mass)])
        sf = s_hi + np.concatenate([np.cumsum(mass[::-1])[::-1], [0.0]])
        logit = np.log(cdf) - np.log(sf)
        self.r = r
        self.cdf_nodes = cdf
        self.sf_nodes = sf
        self.f_lo, self.s_hi = f_lo, s_hi
        self.r_lo, self.r_hi = r_lo, r_hi
        self.tail_rate = float(density(np.array([r_hi]))[0]) / s_hi
        log_r = np.log(r)
        self._to_logr = PchipInterpolator(logit, log_r, extrapolate=False)
        self._to_logit = PchipInterpolator(log_r, logit, extrapolate=False)

    def _integral(self, a, b):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(lambda s: float(self.density(np.array([s]))[0]), a, b,
                                    epsabs=0.0, epsrel=1e-12, limit=500)
        return val

    def _survival(self, r):
        return self._integral(r, np.inf)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        out = np.empty_like(u)
        low = u < self.cdf_nodes[0]
        high = u > self.cdf_nodes[-1]
        mid = ~(low | high)
        with np.errstate(divide="ignore"):
            out[low] = self.r_lo * (u[low] / self.f_lo) ** (1.0 / self.n)
            out[high] = self.r_hi + np.log(self.s_hi / (1.0 - u[high])) / self.tail_rate
            um = u[mid]
            out[mid] = np.exp(self._to_logr(np.log(um) - np.log1p(-um)))
        return out

    def cdf(self, r):
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        low = r < self.r_lo
        high = r > self.r_hi
        mid = ~(low | high)
        out[low] = self.f_lo * (np.maximum(r[low], 0.0) / self.r_lo) ** self.n
        out[high] = 1.0 - self.s_hi * np.exp(-self.tail_rate * (r[high] - self.r_hi))
        out[mid] = special.expit(self._to_logit(np.log(r[mid])))
        return out


def _gamma_mixture_cdf(shapes, weights):
    weights = np.asarray(weights, dtype=float) / np.sum(weights)

    def cdf(r):
        r = np.maximum(np.asarray(r, dtype=float), 0.0)
        return sum(w * special.gammainc(a, r) for a, w in zip(shapes, weights))

    return cdf


def radial_law(gen: DensityGenerator) -> RadialLaw:
    """Build the radial law for a normalized generator."""
    n = gen.n
    fam = gen.family
    kind = fam.kind
    if kind is FamilyKind.NORMAL:
        return RadialLaw(
            n, gen, "exact-normal",
            cdf=lambda r: special.gammainc(n / 2.0, 0.5 * np.square(np.asarray(r, dtype=float))),
            ppf=lambda u: np.sqrt(2.0 * special.gammaincinv(n / 2.0, np.asarray(u, dtype=float))),
        )
    if kind is FamilyKind.STUDENT_T:
        # level k is a t law with nu = p - 2k and squared scale p / nu
        nu = fam.p - 2.0 * gen.level
        scale = fam.p / nu * n
        return RadialLaw(
            n, gen, "exact-student",
            cdf=lambda r: special.fdtr(n, nu, np.square(np.asarray(r, dtype=float)) / scale),
            ppf=lambda u: np.sqrt(scale * special.fdtri(n, nu, np.asarray(u, dtype=float))),
        )
    if kind is FamilyKind.LAPLACE and gen.level == 0:
        return RadialLaw(
            n, gen, "exact-laplace",
            cdf=lambda r: special.gammainc(n, np.maximum(np.asarray(r, dtype=float), 0.0)),
            ppf=lambda u: special.gammaincinv(n, np.asarray(u, dtype=float)),
        )

    k0 = gen.c * 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)
    g0 = float(gen.g(np.array([0.0]))[0])
    table = _RadialTable(gen.density_of_radius, n, g0, k0)
    cdf = table.cdf
    if kind is FamilyKind.LAPLACE:
        # r^(n-1) (1 + r) e^-r and r^(n-1) (3 + 3r + r^2) e^-r are Gamma mixtures
        if gen.level == 1:
            cdf = _gamma_mixture_cdf((n, n + 1), (1.0, n))
        else:
            cdf = _gamma_mixture_cdf((n, n + 1, n + 2), (3.0, 3.0 * n, n * (n + 1.0)))
    return RadialLaw(n, gen, "tabulated", cdf=cdf, ppf=table.ppf,
                     cdf_grid=(table.r, table.cdf_nodes))


# ---------------------------------------------------------------------------
# random streams


def _chunk_rng(seed: int, index: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index, stream))))


def _chunk(seed: int, index: int, size: int, n: int):
    # separate streams keep every prefix of a chunk independent of its size
    v = _chunk_rng(seed, index, 0).random(size)
    z = _chunk_rng(seed, index, 1).standard_normal((size, n))
    if n:
        z /= np.linalg.norm(z, axis=1, keepdims=True)
    return v, z


def uniform_stream(seed: int, count: int, n: int, workers: int = 1):
    """Radial uniforms ``(count,)`` and sphere directions ``(count, n)``."""
    if count < 0:
        raise ValueError("count must be non-negative")
    n_chunks = -(-count // CHUNK_SIZE)
    sizes = [min(CHUNK_SIZE, count - i * CHUNK_SIZE) for i in range(n_chunks)]
    if workers > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda i: _chunk(seed, i, sizes[i], n), range(n_chunks)))
    else:
        parts = [_chunk(seed, i, sizes[i], n) for i in range(n_chunks)]
    if not parts:
        return np.zeros(0), np.zeros((0, n))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


# ---------------------------------------------------------------------------
# distribution object


@dataclass(frozen=True, eq=False)
class EllipticalDistribution:
    """``E_n(mu, Sigma, g)`` or one of its associated laws (``level`` 1, 2).

    ``triple`` and ``constants`` always describe the *base* family so that
    the associated laws can be reached from any level.
    """

    mu: np.ndarray
    sigma: SymMatrix
    family: GeneratorFamily
    triple: GeneratorTriple = field(repr=False)
    constants: NormalizingConstants = field(repr=False)
    factor: LowerFactor = field(repr=False)
    level: int = 0

    @classmethod
    def create(cls, family, mu, sigma, tol: float = 1e-12) -> "EllipticalDistribution":
        """Validate inputs, factor ``sigma`` and compute constants.

        A positive definite ``sigma`` gets its Cholesky factor; otherwise a
        positive semidefinite factor is used (no density then).
        """
        if isinstance(family, str):
            family = parse_family(family)
        mu = np.array(mu, dtype=float, ndmin=1)
        sigma = as_sym(sigma)
        if mu.shape != (sigma.n,):
            raise ValueError(f"mu has shape {mu.shape}, sigma is {sigma.n}x{sigma.n}")
        try:
            factor = cholesky(sigma, tol)
        except NotPositiveDefiniteError:
            factor = psd_factor(sigma, tol)
        n = sigma.n
        triple = generator_triple(family, n, depth=family.depth)
        constants = normalizing_constants(family, n, cross_check=False)
        mu.setflags(write=False)
        return cls(mu, sigma, family, triple, constants, factor)

    @classmethod
    def from_spec(cls, spec: dict) -> "EllipticalDistribution":
        """Build from ``{"family": ..., "mu": [...], "sigma": [[...]]}``."""
        return cls.create(spec["family"], spec["mu"], spec["sigma"])

    @property
    def n(self) -> int:
        return self.sigma.n

    @cached_property
    def generator(self) -> DensityGenerator:
        return DensityGenerator(self.family, self.n, self.level,
                                self.triple.level(self.level), self.constants.level(self.level))

    @cached_property
    def radial(self) -> RadialLaw:
        return radial_law(self.generator)

    @property
    def b_star(self) -> float:
        return self.constants.b_star

    @property
    def b_dstar(self) -> float:
        return self.constants.b_dstar

    def covariance_scale(self) -> float:
        """Ratio ``Cov(X) / Sigma`` for this level (base or level 1)."""
        if self.level == 0:
            return self.constants.b_star
        if self.level == 1:
            return self.constants.c_star / self.constants.level(2)
        raise ValidityError("covariance scale of the level-2 law is not tabulated")

    def covariance(self) -> np.ndarray:
        return self.covariance_scale() * self.sigma.array

    def at_level(self, level: int) -> "EllipticalDistribution":
        if level == self.level:
            return self
        self.family.require(level)
        return EllipticalDistribution(self.mu, self.sigma, self.family, self.triple,
                                      self.constants, self.factor, level)

    @cached_property
    def _associated(self):
        return self.at_level(1), self.at_level(2)

    def pdf(self, x):
        return pdf(self, x)

    def transform(self, v: np.ndarray, directions: np.ndarray) -> np.ndarray:
        """Map radial uniforms and sphere directions to draws of this law."""
        r = self.radial.ppf(v)
        return self.mu + (r[:, None] * directions) @ self.factor.entries.T

    def sample(self, seed: int, count: int, workers: int = 1) -> np.ndarray:
        return sample(self, seed, count, workers)


def pdf(d: EllipticalDistribution, x):
    """Density ``c / sqrt|Sigma| * g(q/2)``; rows of ``x`` are points."""
    if not d.factor.full_rank:
        raise SingularFactorError("distribution with singular Sigma has no density")
    gen = d.generator
    q_half = mahalanobis_half(d.factor, x, d.mu)
    val = gen.c * np.exp(-0.5 * d.factor.log_det()) * gen.g(np.asarray(q_half))
    return float(val) if np.ndim(q_half) == 0 else val


def sample(d: EllipticalDistribution, seed: int, count: int, workers: int = 1) -> np.ndarray:
    """``count`` draws as an ``(count, n)`` array, reproducible per ``seed``."""
    v, u = uniform_stream(seed, count, d.n, workers)
    if count == 0:
        return np.zeros((0, d.n))
    return d.transform(v, u)


def associated_distributions(d: EllipticalDistribution):
    """``(X*, X**)``: same ``mu`` and ``Sigma``, generators ``g_bar`` and ``g_dbar``."""
    if d.level != 0:
        raise ValidityError("associated laws are defined relative to the base law")
    d.family.require(2)
    return d._associated
