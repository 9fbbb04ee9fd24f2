"""Density generators, their cumulative tails and normalizing constants.

A generator ``g`` defines the density ``c / sqrt|S| * g(q/2)`` where ``q`` is
the squared Mahalanobis distance.  Its first and second tail integrals

    g_bar(t)  = int_t^inf g(v) dv
    g_dbar(t) = int_t^inf g_bar(v) dv

are again generators; the elliptical laws they define are called the
*associated* distributions of levels 1 and 2 (``X*`` and ``X**``).
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator
from scipy.special import expit

from .errors import NonConvergenceError, ValidityError
from .special_functions import beta_fn, hurwitz_lerch_psi, log_gamma

__all__ = [
    "FamilyKind",
    "GeneratorFamily",
    "GeneratorTriple",
    "NormalizingConstants",
    "DensityGenerator",
    "parse_family",
    "generator_triple",
    "radial_moment_integral",
    "normalizing_constants",
    "associated_families",
]

Generator = Callable[[np.ndarray], np.ndarray]

RADIAL_REL_TOL = 1e-11
CUSTOM_GRID_NODES = 2048


class FamilyKind(str, Enum):
    NORMAL = "normal"
    STUDENT_T = "t"
    LOGISTIC = "logistic"
    LAPLACE = "laplace"
    CUSTOM = "custom"


@dataclass(frozen=True)
class GeneratorFamily:
    """A density-generator family and its parameters.

    ``p`` is the Student-t degrees of freedom.  ``custom_g`` must be a
    vectorized, non-negative, non-increasing callable ``t -> g(t)`` on
    ``[0, inf)``.
    """

    kind: FamilyKind
    p: Optional[float] = None
    custom_g: Optional[Generator] = field(default=None, compare=False)
    name: Optional[str] = None

    def __post_init__(self):
        if self.kind is FamilyKind.STUDENT_T:
            if self.p is None or not self.p > 0 or not math.isfinite(self.p):
                raise ValidityError(f"Student-t needs p > 0, got {self.p!r}")
        elif self.p is not None:
            raise ValidityError(f"parameter p is only meaningful for Student-t, not {self.kind.value}")
        if self.kind is FamilyKind.CUSTOM and self.custom_g is None:
            raise ValidityError("custom family requires custom_g")

    @classmethod
    def normal(cls):
        return cls(FamilyKind.NORMAL)

    @classmethod
    def student_t(cls, p: float):
        return cls(FamilyKind.STUDENT_T, p=float(p))

    @classmethod
    def logistic(cls):
        return cls(FamilyKind.LOGISTIC)

    @classmethod
    def laplace(cls):
        return cls(FamilyKind.LAPLACE)

    @classmethod
    def custom(cls, g: Generator, name: str = "custom"):
        return cls(FamilyKind.CUSTOM, custom_g=g, name=name)

    @property
    def depth(self) -> int:
        """Highest associated level (0, 1 or 2) with a finite normalizing constant.

        Only Student-t is restricted here; custom generators are checked
        numerically when their constants are computed.
        """
        if self.kind is FamilyKind.STUDENT_T:
            return 2 if self.p > 4 else (1 if self.p > 2 else 0)
        return 2

    def require(self, level: int):
        if level > self.depth:
            need = {1: "p > 2", 2: "p > 4"}[level]
            raise ValidityError(f"{self} has no level-{level} associated law (needs {need})")

    def __str__(self):
        if self.kind is FamilyKind.STUDENT_T:
            return f"t(p={self.p:g})"
        if self.kind is FamilyKind.CUSTOM:
            return self.name or "custom"
        return self.kind.value


_FAMILY_RE = re.compile(r"^\s*t\s*\(\s*p\s*=\s*([^)\s]+)\s*\)\s*$")


def parse_family(text: str) -> GeneratorFamily:
    """Parse ``normal | t(p=<real>) | logistic | laplace``."""
    s = text.strip().lower()
    if s == "normal":
        return GeneratorFamily.normal()
    if s == "logistic":
        return GeneratorFamily.logistic()
    if s == "laplace":
        return GeneratorFamily.laplace()
    m = _FAMILY_RE.match(s)
    if m:
        try:
            p = float(m.group(1))
        except ValueError:
            raise ValueError(f"bad degrees of freedom in family spec {text!r}") from None
        return GeneratorFamily.student_t(p)
    raise ValueError(f"unrecognised family spec {text!r}; expected normal | t(p=<real>) | logistic | laplace")


@dataclass(frozen=True)
class GeneratorTriple:
    """``g``, ``g_bar`` and ``g_dbar`` for one family in dimension ``n``.

    Entries past the family's depth are ``None`` (Student-t with small ``p``).
    """

    g: Generator
    g_bar: Optional[Generator]
    g_dbar: Optional[Generator]
    n: int

    def level(self, k: int) -> Generator:
        fn = (self.g, self.g_bar, self.g_dbar)[k]
        if fn is None:
            raise ValidityError(f"level-{k} generator unavailable")
        return fn


@dataclass(frozen=True)
class NormalizingConstants:
    """Normalizing constants of the base and associated generators.

    ``b_star = c / c_star`` and ``b_dstar = c / c_dstar``.  ``discrepancy``
    is the largest relative gap between the primary values and an independent
    quadrature recomputation.
    """

    n: int
    c: float
    c_star: Optional[float]
    c_dstar: Optional[float]
    b_star: Optional[float]
    b_dstar: Optional[float]
    discrepancy: float = 0.0
    quadrature: tuple = ()

    def level(self, k: int) -> float:
        v = (self.c, self.c_star, self.c_dstar)[k]
        if v is None:
            raise ValidityError(f"level-{k} normalizing constant unavailable")
        return v

    @property
    def phi_slope(self) -> float:
        """``phi'(0)``, the negative covariance scale of the base law."""
        return -self.b_star

    @property
    def phi_star_slope(self) -> float:
        """``phi*'(0)`` of the level-1 law, equal to ``-c_star / c_dstar``."""
        if self.c_dstar is None:
            raise ValidityError("level-2 constant unavailable")
        return -self.c_star / self.c_dstar


@dataclass(frozen=True)
class DensityGenerator:
    """One generator together with the constant that normalizes it."""

    family: GeneratorFamily
    n: int
    level: int
    g: Generator = field(compare=False)
    c: float

    def density_of_radius(self, r):
        """Density of ``R = sqrt(q)`` on ``[0, inf)``."""
        r = np.asarray(r, dtype=float)
        surface = 2.0 * math.pi ** (self.n / 2.0) / math.gamma(self.n / 2.0)
        return self.c * surface * r ** (self.n - 1) * self.g(0.5 * r * r)


# ---------------------------------------------------------------------------
# closed-form generators


def _normal_g(t):
    return np.exp(-np.asarray(t, dtype=float))


def _student_fns(p: float, n: int, depth: int):
    def power(k):
        return lambda t: (1.0 + 2.0 * np.asarray(t, dtype=float) / p) ** (-(p + n - k) / 2.0)

    base0, base2, base4 = power(0), power(2), power(4)
    if depth < 1:
        return base0, None, None
    k1 = p / (p + n - 2.0)

    def g_bar(t):
        return k1 * base2(t)

    if depth < 2:
        return base0, g_bar, None
    k2 = k1 * p / (p + n - 4.0)

    def g_dbar(t):
        return k2 * base4(t)

    return base0, g_bar, g_dbar


def _logistic_g(t):
    t = np.asarray(t, dtype=float)
    return expit(-t) * expit(t)


def _logistic_g_bar(t):
    return expit(-np.asarray(t, dtype=float))


def _logistic_g_dbar(t):
    # log(1 + e^-t) without forming e^-t separately from the log
    return np.logaddexp(0.0, -np.asarray(t, dtype=float))


def _laplace_g(t):
    return np.exp(-np.sqrt(2.0 * np.asarray(t, dtype=float)))


def _laplace_g_bar(t):
    r = np.sqrt(2.0 * np.asarray(t, dtype=float))
    return (1.0 + r) * np.exp(-r)


def _laplace_g_dbar(t):
    t = np.asarray(t, dtype=float)
    r = np.sqrt(2.0 * t)
    return (3.0 + 2.0 * t + 3.0 * r) * np.exp(-r)


class _TabulatedTails:
    """Numerical ``g_bar``/``g_dbar`` for a custom generator.

    Values at a log-spaced grid are accumulated from the far end with
    8-point Gauss-Legendre panels; in between, ``log`` of each tail is
    interpolated with a monotone cubic; past the last node an exponential
    tail is fitted to the local decay rate.
    """

    def __init__(self, g: Generator, nodes: int = CUSTOM_GRID_NODES):
        self.g = g
        g0 = float(g(np.array([0.0]))[0])
        if not g0 > 0 or not math.isfinite(g0):
            raise ValidityError(f"custom generator must be positive and finite at 0, got {g0!r}")
        t_max = 16.0
        while t_max < 1e6 and float(g(np.array([t_max]))[0]) > 1e-14 * g0:
            t_max *= 2.0
        t = np.concatenate([[0.0], np.logspace(-6, math.log10(t_max), nodes - 1)])
        t[-1] = t_max
        x, w = np.polynomial.legendre.leggauss(8)
        lo, hi = t[:-1], t[1:]
        half = 0.5 * (hi - lo)[:, None]
        v = 0.5 * (hi + lo)[:, None] + half * x[None, :]
        gv = np.asarray(g(v.ravel()), dtype=float).reshape(v.shape)
        if np.any(gv < 0) or not np.all(np.isfinite(gv)):
            raise ValidityError("custom generator must be finite and non-negative")
        mass = np.sum(gv * w, axis=1) * half[:, 0]
        first_moment = np.sum((v - lo[:, None]) * gv * w, axis=1) * half[:, 0]

        g_end = float(g(np.array([t_max]))[0])
        eps = 1e-3 * t_max
        g_prev = float(g(np.array([t_max - eps]))[0])
        if g_end > 0 and g_prev > g_end:
            rate = (math.log(g_prev) - math.log(g_end)) / eps
        else:
            rate = 1.0
        self.rate1 = rate
        gbar = np.empty_like(t)
        gdbar = np.empty_like(t)
        gbar[-1] = g_end / rate
        gdbar[-1] = gbar[-1] / rate
        for k in range(len(t) - 2, -1, -1):
            h = t[k + 1] - t[k]
            gbar[k] = gbar[k + 1] + mass[k]
            gdbar[k] = gdbar[k + 1] + h * gbar[k + 1] + first_moment[k]
        self.t = t
        self.t_max = t_max
        self.gbar_end = gbar[-1]
        self.gdbar_end = gdbar[-1]
        self.rate2 = gbar[-1] / gdbar[-1]
        with np.errstate(divide="ignore"):
            self._log_gbar = PchipInterpolator(t, np.log(gbar), extrapolate=False)
            self._log_gdbar = PchipInterpolator(t, np.log(gdbar), extrapolate=False)

    def _eval(self, interp, end, rate, t):
        t = np.asarray(t, dtype=float)
        out = np.empty_like(t)
        inside = t <= self.t_max
        out[inside] = np.exp(interp(t[inside]))
        out[~inside] = end * np.exp(-rate * (t[~inside] - self.t_max))
        return out

    def g_bar(self, t):
        return self._eval(self._log_gbar, self.gbar_end, self.rate1, t)

    def g_dbar(self, t):
        return self._eval(self._log_gdbar, self.gdbar_end, self.rate2, t)


_CUSTOM_CACHE: dict = {}


def _custom_tails(family: GeneratorFamily) -> _TabulatedTails:
    key = id(family.custom_g)
    hit = _CUSTOM_CACHE.get(key)
    if hit is None or hit[0] is not family.custom_g:
        hit = (family.custom_g, _TabulatedTails(family.custom_g))
        _CUSTOM_CACHE[key] = hit
    return hit[1]


def generator_triple(family: GeneratorFamily, n: int, depth: int = 2) -> GeneratorTriple:
    """Generator and cumulative generators of ``family`` in dimension ``n``.

    Raises :class:`ValidityError` when ``family`` cannot reach ``depth``
    (Student-t: level 1 needs ``p > 2``, level 2 needs ``p > 4``).
    """
    if n < 1:
        raise ValueError(f"dimension must be a positive integer, got {n!r}")
    family.require(depth)
    kind = family.kind
    if kind is FamilyKind.NORMAL:
        return GeneratorTriple(_normal_g, _normal_g, _normal_g, n)
    if kind is FamilyKind.STUDENT_T:
        return GeneratorTriple(*_student_fns(family.p, n, family.depth), n)
    if kind is FamilyKind.LOGISTIC:
        return GeneratorTriple(_logistic_g, _logistic_g_bar, _logistic_g_dbar, n)
    if kind is FamilyKind.LAPLACE:
        return GeneratorTriple(_laplace_g, _laplace_g_bar, _laplace_g_dbar, n)
    tails = _custom_tails(family)
    return GeneratorTriple(family.custom_g, tails.g_bar, tails.g_dbar, n)


# ---------------------------------------------------------------------------
# radial integral


def _quad(fn, a, b, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return integrate.quad(fn, a, b, epsabs=0.0, epsrel=1e-13, limit=2000, **kw)


def radial_moment_integral(h: Callable, n: int, rel_tol: float = RADIAL_REL_TOL) -> float:
    """``int_0^inf u^(n/2 - 1) h(u) du`` by adaptive quadrature.

    ``[0, 1]`` is handled with the algebraic end-point weight ``u^(n/2-1)``;
    the tail ``[1, inf)`` is mapped to ``(0, 1]`` through ``u = 1/v``.
    """
    if n < 1:
        raise ValueError(f"dimension must be positive, got {n!r}")
    alpha = n / 2.0 - 1.0

    def scalar(u):
        return float(h(np.array([u]))[0])

    head, err_head = _quad(scalar, 0.0, 1.0, weight="alg", wvar=(alpha, 0.0))

    def mapped(v):
        if v <= 0.0:
            return 0.0
        val = scalar(1.0 / v)
        if val == 0.0:
            return 0.0
        # log space: v^(-alpha-2) alone can overflow near v = 0
        lg = math.log(abs(val)) - (alpha + 2.0) * math.log(v)
        return math.copysign(math.exp(lg) if lg < 709.0 else math.inf, val)

    tail, err_tail = _quad(mapped, 0.0, 1.0)
    value = head + tail
    err = err_head + err_tail
    if not math.isfinite(value) or not value > 0 or err > rel_tol * abs(value):
        raise NonConvergenceError(
            f"radial integral in dimension {n} did not converge (value={value!r}, err={err!r})"
        )
    return value


# ---------------------------------------------------------------------------
# normalizing constants


def _log_prefactor(n: int) -> float:
    # log( Gamma(n/2) / (2 pi)^(n/2) )
    return log_gamma(n / 2.0) - (n / 2.0) * math.log(2.0 * math.pi)


def _closed_form_constants(family: GeneratorFamily, n: int):
    kind = family.kind
    half = n / 2.0
    if kind is FamilyKind.NORMAL:
        c = (2.0 * math.pi) ** (-half)
        return c, c, c
    if kind is FamilyKind.STUDENT_T:
        p = family.p
        log_ppi = half * math.log(p * math.pi)
        c = math.exp(log_gamma((p + n) / 2.0) - log_gamma(p / 2.0) - log_ppi)
        c1 = c2 = None
        if family.depth >= 1:
            c1 = (p + n - 2.0) * math.exp(log_gamma(half) - log_ppi) / (p * beta_fn(half, (p - 2.0) / 2.0))
        if family.depth >= 2:
            c2 = ((p + n - 2.0) * (p + n - 4.0) * math.exp(log_gamma(half) - log_ppi)
                  / (p * p * beta_fn(half, (p - 4.0) / 2.0)))
        return c, c1, c2
    if kind is FamilyKind.LOGISTIC:
        scale = (2.0 * math.pi) ** half
        c = 1.0 / (scale * hurwitz_lerch_psi(2, -1.0, half, 1.0))
        c1 = 1.0 / (scale * hurwitz_lerch_psi(1, -1.0, half, 1.0))
        c2 = 1.0 / (scale * hurwitz_lerch_psi(1, -1.0, half + 1.0, 1.0))
        return c, c1, c2
    if kind is FamilyKind.LAPLACE:
        log_base = log_gamma(half) - math.log(2.0) - half * math.log(math.pi)
        c = math.exp(log_base - log_gamma(n))
        c1 = n * math.exp(log_base - log_gamma(n + 2.0))
        c2 = n * (n + 2.0) * math.exp(log_base - log_gamma(n + 4.0))
        return c, c1, c2
    raise AssertionError(kind)


def _custom_constants(family: GeneratorFamily, n: int):
    """Moment route: ``int t^(n/2-1) g_bar = (2/n) int t^(n/2) g`` etc."""
    g = family.custom_g
    pref = math.exp(_log_prefactor(n))
    i0 = radial_moment_integral(g, n)
    i1 = 2.0 / n * radial_moment_integral(g, n + 2)
    i2 = 4.0 / (n * (n + 2.0)) * radial_moment_integral(g, n + 4)
    return pref / i0, pref / i1, pref / i2


def _quadrature_constants(triple: GeneratorTriple, depth: int):
    pref = math.exp(_log_prefactor(triple.n))
    out = []
    for k in range(3):
        if k > depth:
            out.append(None)
        else:
            out.append(pref / radial_moment_integral(triple.level(k), triple.n))
    return tuple(out)


def normalizing_constants(family: GeneratorFamily, n: int, cross_check: bool = True) -> NormalizingConstants:
    """All normalizing constants of ``family`` in dimension ``n``.

    Closed forms are used for the built-in families.  With ``cross_check``
    the constants are recomputed by radial quadrature of the generator triple
    and the worst relative gap is stored in ``discrepancy``.

    Student-t with ``2 < p <= 4`` returns a partial record (no ``c_dstar``);
    ``p <= 2`` has neither associated constant.
    """
    depth = family.depth
    if family.kind is FamilyKind.CUSTOM:
        primary = _custom_constants(family, n)
    else:
        primary = _closed_form_constants(family, n)
    c, c1, c2 = primary
    discrepancy = 0.0
    quad = ()
    if cross_check:
        triple = generator_triple(family, n, depth=depth)
        quad = _quadrature_constants(triple, depth)
        for a, b in zip(primary, quad):
            if a is not None and b is not None:
                discrepancy = max(discrepancy, abs(a - b) / abs(a))
    return NormalizingConstants(
        n=n,
        c=c,
        c_star=c1,
        c_dstar=c2,
        b_star=c / c1 if c1 is not None else None,
        b_dstar=c / c2 if c2 is not None else None,
        discrepancy=discrepancy,
        quadrature=quad,
    )


def associated_families(family: GeneratorFamily, n: int, constants: Optional[NormalizingConstants] = None):
    """Level-1 and level-2 generators with their own normalizing constants.

    Returns ``(X*, X**)`` as :class:`DensityGenerator` records whose base
    generators are ``g_bar`` and ``g_dbar``.
    """
    family.require(2)
    triple = generator_triple(family, n)
    if constants is None:
        constants = normalizing_constants(family, n, cross_check=False)
    return (
        DensityGenerator(family, n, 1, triple.g_bar, constants.c_star),
        DensityGenerator(family, n, 2, triple.g_dbar, constants.c_dstar),
    )
