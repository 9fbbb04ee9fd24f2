"""Scalar special functions behind the closed-form normalizing constants.

Only real arguments are supported.  The alternating series that appear for
``z = -1`` are summed with the Euler (binomial) transform, which converges
geometrically and assigns the analytic-continuation value to the
Abel-summable series met at small ``s`` (e.g. ``sum (-1)^k (k+1)^0 = 1/2``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError, NonConvergenceError, PoleError

__all__ = [
    "SeriesControl",
    "log_gamma",
    "beta_fn",
    "riemann_zeta",
    "dirichlet_eta",
    "hurwitz_lerch_psi",
]

# Euler-transform work grows quadratically; past this many terms the transformed
# series is below double-precision noise for every parameter we support.
_EULER_HARD_CAP = 4096

# Bernoulli numbers B_2, B_4, ..., B_16 for the Euler-Maclaurin tail.
_BERNOULLI_EVEN = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
)


@dataclass(frozen=True)
class SeriesControl:
    """Truncation control for series evaluations."""

    rel_tol: float = 1e-12
    max_terms: int = 10**6

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError(f"rel_tol must be positive, got {self.rel_tol!r}")
        if self.max_terms < 1:
            raise ValueError(f"max_terms must be >= 1, got {self.max_terms!r}")


DEFAULT_CONTROL = SeriesControl()


def log_gamma(x: float) -> float:
    """Natural log of the Gamma function for ``x > 0``."""
    x = float(x)
    if not x > 0 or math.isnan(x):
        raise DomainError(f"log_gamma requires x > 0, got {x!r}")
    return math.lgamma(x)


def beta_fn(a: float, b: float) -> float:
    """Euler Beta function ``B(a, b)`` for positive arguments."""
    if not (a > 0 and b > 0):
        raise DomainError(f"beta_fn requires a, b > 0, got ({a!r}, {b!r})")
    return math.exp(log_gamma(a) + log_gamma(b) - log_gamma(a + b))


def _euler_alternating(term, ctrl: SeriesControl) -> float:
    """Sum ``sum_k (-1)^k term(k)`` with the Euler transform.

    The transformed series is ``sum_j (-1)^j (Delta^j a)_0 / 2^(j+1)``.  When
    ``a_k`` is completely monotone its terms are positive and decreasing, so
    the tail after index ``j`` is at most twice the ``j``-th term; that bound is
    the stopping rule.
    """
    limit = min(ctrl.max_terms, _EULER_HARD_CAP)
    diag: list[float] = []  # diag[k] = Delta^k a_{j-k}
    total = 0.0
    scale = 2.0
    for j in range(limit):
        new = [term(j)]
        for k in range(1, j + 1):
            new.append(new[k - 1] - diag[k - 1])
        diag = new
        t = (-1) ** j * diag[j] / scale
        total += t
        scale *= 2.0
        if j >= 2 and 2.0 * abs(t) <= ctrl.rel_tol * abs(total):
            return total
    raise NonConvergenceError(
        f"alternating series did not reach rel_tol={ctrl.rel_tol} in {limit} terms"
    )


def dirichlet_eta(s: float, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Alternating zeta ``eta(s) = sum_{n>=1} (-1)^(n+1) n^-s`` for real ``s``.

    For ``s <= 0`` the value returned is the Euler (= Abel) sum, which agrees
    with the analytic continuation; callers in this package only go down to
    ``s = -1/2``.
    """
    return _euler_alternating(lambda k: (k + 1.0) ** (-s), ctrl)


def _zeta_odd_terms(s: float, ctrl: SeriesControl) -> float:
    # zeta(s) = (1 - 2^-s)^-1 * sum_{k>=1} (2k-1)^-s, tail by Euler-Maclaurin
    n_direct = 16
    while n_direct <= ctrl.max_terms:
        head = math.fsum((2.0 * k - 1.0) ** (-s) for k in range(1, n_direct + 1))
        x0 = n_direct + 1
        u = 2.0 * x0 - 1.0
        tail = u ** (1.0 - s) / (2.0 * (s - 1.0)) + 0.5 * u ** (-s)
        # f^(m)(x) = (-1)^m s(s+1)...(s+m-1) 2^m (2x-1)^(-s-m)
        rising = s
        last = math.inf
        for j, b2j in enumerate(_BERNOULLI_EVEN, start=1):
            m = 2 * j - 1
            if j > 1:
                rising *= (s + m - 2) * (s + m - 1)
            deriv = -rising * 2.0**m * u ** (-s - m)
            corr = b2j / math.factorial(2 * j) * deriv
            tail -= corr
            last = abs(corr)
        total = head + tail
        if last <= 0.1 * ctrl.rel_tol * abs(total):
            return total / (1.0 - 2.0 ** (-s))
        n_direct *= 2
    raise NonConvergenceError(f"zeta({s}) did not converge within max_terms={ctrl.max_terms}")


def riemann_zeta(s: float, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Riemann zeta for real ``s > 0``, ``s != 1``.

    ``s > 1`` sums the odd-terms form with an Euler-Maclaurin tail;
    ``0 < s < 1`` uses ``eta(s) / (1 - 2^(1-s))``.
    """
    s = float(s)
    if math.isnan(s) or s <= 0:
        raise DomainError(f"riemann_zeta is implemented for s > 0 only, got {s!r}")
    if s == 1.0:
        raise PoleError("riemann_zeta has a pole at s = 1")
    if s > 1:
        return _zeta_odd_terms(s, ctrl)
    return dirichlet_eta(s, ctrl) / (1.0 - 2.0 ** (1.0 - s))


def _psi_coefficient(mu: float):
    """Return ``n -> Gamma(mu + n) / (Gamma(mu) n!)``."""
    if mu == 1:
        return lambda n: 1.0
    if mu == 2:
        return lambda n: n + 1.0
    return lambda n: math.exp(math.lgamma(mu + n) - math.lgamma(mu) - math.lgamma(n + 1.0))


def hurwitz_lerch_psi(
    mu: float,
    z: float,
    s: float,
    a: float,
    ctrl: SeriesControl = DEFAULT_CONTROL,
) -> float:
    """Generalized Hurwitz-Lerch zeta ``Psi*_mu(z, s, a)``.

    ``(1/Gamma(mu)) * sum_{n>=0} Gamma(mu+n)/n! * z^n / (n+a)^s``.

    Parameters
    ----------
    mu : float
        Positive order.
    z : float
        Argument in ``[-1, 1)``.
    s, a : float
        Positive exponent and shift.
    ctrl : SeriesControl
        Relative tolerance and term budget.

    Notes
    -----
    At ``z = -1`` the series is summed by the Euler transform, which for
    ``mu = 2, s <= 1`` yields the value of the integral representation
    ``(1/Gamma(s)) int_0^inf t^(s-1) e^(-a t) / (1 - z e^-t)^mu dt``
    even though the raw series does not converge there.
    """
    if not mu > 0:
        raise DomainError(f"mu must be positive, got {mu!r}")
    if not a > 0:
        raise DomainError(f"a must be positive, got {a!r}")
    if not s > 0:
        raise DomainError(f"s must be positive, got {s!r}")
    if not -1.0 <= z < 1.0:
        raise DomainError(f"z must lie in [-1, 1), got {z!r}")
    coef = _psi_coefficient(mu)

    if z == 0:
        return a ** (-s)
    if z == -1.0:
        return _euler_alternating(lambda n: coef(n) * (n + a) ** (-s), ctrl)

    # |z| < 1: geometric tail bound once the term ratio is below one
    total = 0.0
    zn = 1.0
    for n in range(ctrl.max_terms):
        t = coef(n) * zn * (n + a) ** (-s)
        total += t
        ratio = abs(z) * (mu + n + 1.0) / (n + 2.0)
        nxt = abs(coef(n + 1) * zn * z) * (n + 1.0 + a) ** (-s)
        if ratio < 1.0 and nxt / (1.0 - ratio) <= ctrl.rel_tol * abs(total):
            return total
        zn *= z
    raise NonConvergenceError(
        f"Psi*_{mu}({z}, {s}, {a}) did not converge within max_terms={ctrl.max_terms}"
    )
