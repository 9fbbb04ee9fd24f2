"""Vectorized test functions with gradients and Hessians.

Every callable works on an ``(N, n)`` array of points: ``eval`` returns
``(N,)``, ``grad`` ``(N, n)`` and ``hess`` ``(N, n, n)``.  Missing
derivatives fall back to central differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "SmoothFunction",
    "fd_gradient",
    "fd_hessian",
    "constant",
    "monomial",
    "linear_combination",
    "power_times",
    "permuted",
    "gaussian_bump",
    "sin_sum",
    "from_spec",
]

_EPS = np.finfo(float).eps
FD_TOLERANCE = 1e-4
PROBE_POINTS = 10


def _rows(x) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=float))


def fd_gradient(fn: Callable, x, scale: float = 1.0) -> np.ndarray:
    """Central-difference gradient with step ``scale*(1+|x_i|)*eps^(1/3)``."""
    x = _rows(x)
    n = x.shape[1]
    out = np.empty_like(x)
    for i in range(n):
        h = scale * (1.0 + np.abs(x[:, i])) * _EPS ** (1.0 / 3.0)
        xp, xm = x.copy(), x.copy()
        xp[:, i] += h
        xm[:, i] -= h
        out[:, i] = (fn(xp) - fn(xm)) / (xp[:, i] - xm[:, i])
    return out


def fd_hessian(fn: Callable, x, scale: float = 1.0) -> np.ndarray:
    """Central-difference Hessian with step ``scale*(1+|x_i|)*eps^(1/4)``."""
    x = _rows(x)
    n = x.shape[1]
    h = scale * (1.0 + np.abs(x)) * _EPS ** 0.25
    out = np.empty((x.shape[0], n, n))
    f0 = fn(x)
    for i in range(n):
        xp, xm = x.copy(), x.copy()
        xp[:, i] += h[:, i]
        xm[:, i] -= h[:, i]
        out[:, i, i] = (fn(xp) - 2.0 * f0 + fn(xm)) / h[:, i] ** 2
        for j in range(i):
            pts = []
            for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                y = x.copy()
                y[:, i] += si * h[:, i]
                y[:, j] += sj * h[:, j]
                pts.append(fn(y))
            v = (pts[0] - pts[1] - pts[2] + pts[3]) / (4.0 * h[:, i] * h[:, j])
            out[:, i, j] = out[:, j, i] = v
    return out


@dataclass(eq=False)
class SmoothFunction:
    """Twice continuously differentiable ``f: R^n -> R``.

    Parameters
    ----------
    eval : callable
        ``(N, n) -> (N,)``.
    grad, hess : callable, optional
        Analytic derivatives; checked against central differences the first
        time the function is used in a given dimension.
    fd_scale : float
        Multiplier of the finite-difference step.
    regular : bool
        Caller's assertion that ``x_1 f`` and ``d f / d x_1`` vanish fast
        enough at infinity for integration by parts against the cumulative
        generators.  Polynomials times bounded functions qualify whenever the
        needed moments exist.  Not verified.
    constant_value : float, optional
        Marks ``f`` as identically constant, enabling exact evaluation.
    """

    eval: Callable
    grad: Optional[Callable] = None
    hess: Optional[Callable] = None
    fd_scale: float = 1.0
    regular: bool = True
    constant_value: Optional[float] = None
    name: str = ""
    _validated: set = field(default_factory=set, init=False, repr=False)

    def value(self, x) -> np.ndarray:
        return np.asarray(self.eval(_rows(x)), dtype=float)

    def gradient(self, x) -> np.ndarray:
        x = _rows(x)
        if self.grad is not None:
            return np.asarray(self.grad(x), dtype=float)
        return fd_gradient(self.eval, x, self.fd_scale)

    def hessian(self, x) -> np.ndarray:
        x = _rows(x)
        if self.hess is not None:
            return np.asarray(self.hess(x), dtype=float)
        return fd_hessian(self.eval, x, self.fd_scale)

    @property
    def is_constant(self) -> bool:
        return self.constant_value is not None

    def validate(self, n: int, seed: int = 0) -> None:
        """Check supplied derivatives at seeded probe points (once per ``n``)."""
        if n in self._validated or (self.grad is None and self.hess is None):
            return
        from .oracles import finite_diff_check

        rng = np.random.default_rng(seed)
        report = finite_diff_check(self, rng.standard_normal((PROBE_POINTS, n)))
        if not report.passed:
            raise ValueError(
                f"supplied derivatives of {self.name or 'f'} disagree with finite differences "
                f"(gradient dev {report.grad_deviation:.3g}, Hessian dev {report.hess_deviation:.3g})"
            )
        self._validated.add(n)


def constant(c: float = 1.0) -> SmoothFunction:
    return SmoothFunction(
        eval=lambda x: np.full(x.shape[0], float(c)),
        grad=lambda x: np.zeros_like(x),
        hess=lambda x: np.zeros((x.shape[0], x.shape[1], x.shape[1])),
        constant_value=float(c),
        name=f"const({c:g})",
    )


def monomial(exponents) -> SmoothFunction:
    """``prod_k x_k^{e_k}`` with exact derivatives."""
    e = np.asarray(exponents, dtype=int)
    if np.any(e < 0):
        raise ValueError("exponents must be non-negative")
    if not np.any(e):
        return constant(1.0)
    n = e.size

    def powers(x, shift):
        ex = e - shift
        out = np.ones((x.shape[0], n))
        for k in range(n):
            if ex[k] > 0:
                out[:, k] = x[:, k] ** ex[k]
        return out

    def ev(x):
        return np.prod(powers(x, np.zeros(n, int)), axis=1)

    def gr(x):
        base = powers(x, np.zeros(n, int))
        g = np.zeros_like(x)
        for i in range(n):
            if e[i] == 0:
                continue
            shift = np.zeros(n, int)
            shift[i] = 1
            g[:, i] = e[i] * np.prod(powers(x, shift), axis=1)
        return g

    def he(x):
        h = np.zeros((x.shape[0], n, n))
        for i in range(n):
            for j in range(i + 1):
                shift = np.zeros(n, int)
                shift[i] += 1
                shift[j] += 1
                if np.any(e - shift < 0):
                    continue
                coef = e[i] * (e[i] - 1) if i == j else e[i] * e[j]
                if coef:
                    h[:, i, j] = h[:, j, i] = coef * np.prod(powers(x, shift), axis=1)
        return h

    return SmoothFunction(ev, gr, he, name="x^" + str(tuple(int(v) for v in e)))


def linear_combination(terms) -> SmoothFunction:
    """``sum_k a_k f_k`` for ``terms = [(a_1, f_1), ...]``."""
    terms = list(terms)

    def ev(x):
        return sum(a * f.value(x) for a, f in terms)

    def gr(x):
        return sum(a * f.gradient(x) for a, f in terms)

    def he(x):
        return sum(a * f.hessian(x) for a, f in terms)

    const = None
    if all(f.is_constant for _, f in terms):
        const = sum(a * f.constant_value for a, f in terms)
    return SmoothFunction(ev, gr, he, constant_value=const,
                          regular=all(f.regular for _, f in terms))


def _safe_power(x: np.ndarray, m: int) -> np.ndarray:
    # x^m for m >= 0; negative m only ever appears with a zero coefficient
    return x**m if m >= 0 else np.zeros_like(x)


def power_times(f: SmoothFunction, index: int, m: int) -> SmoothFunction:
    """``x_index^m * f(x)`` with product-rule derivatives."""
    if m < 0:
        raise ValueError("power must be non-negative")
    if m == 0:
        return f

    def ev(x):
        return x[:, index] ** m * f.value(x)

    def gr(x):
        xk = x[:, index]
        g = xk[:, None] ** m * f.gradient(x)
        g[:, index] += m * _safe_power(xk, m - 1) * f.value(x)
        return g

    def he(x):
        xk = x[:, index]
        h = xk[:, None, None] ** m * f.hessian(x)
        cross = m * _safe_power(xk, m - 1)[:, None] * f.gradient(x)
        h[:, index, :] += cross
        h[:, :, index] += cross
        h[:, index, index] += m * (m - 1) * _safe_power(xk, m - 2) * f.value(x)
        return h

    return SmoothFunction(ev, gr, he, fd_scale=f.fd_scale, regular=f.regular,
                          name=f"x{index + 1}^{m}*{f.name or 'f'}")


def permuted(f: SmoothFunction, perm) -> SmoothFunction:
    """``g(y) = f(x)`` where ``y = x[perm]``; ``perm`` must be an involution."""
    perm = np.asarray(perm, dtype=int)
    if not np.array_equal(perm[perm], np.arange(perm.size)):
        raise ValueError("perm must be its own inverse")

    def ev(y):
        return f.value(y[:, perm])

    def gr(y):
        return f.gradient(y[:, perm])[:, perm]

    def he(y):
        return f.hessian(y[:, perm])[:, perm][:, :, perm]

    return SmoothFunction(ev, gr, he, fd_scale=f.fd_scale, regular=f.regular,
                          constant_value=f.constant_value, name=f.name)


def gaussian_bump(width: float = 4.0) -> SmoothFunction:
    """``exp(-||x||^2 / width)``."""

    def ev(x):
        return np.exp(-np.sum(x * x, axis=1) / width)

    def gr(x):
        return (-2.0 / width) * x * ev(x)[:, None]

    def he(x):
        n = x.shape[1]
        outer = np.einsum("ki,kj->kij", x, x) * (4.0 / width**2)
        return (outer - (2.0 / width) * np.eye(n)) * ev(x)[:, None, None]

    return SmoothFunction(ev, gr, he, name=f"exp(-|x|^2/{width:g})")


def sin_sum(indices=(0, 1)) -> SmoothFunction:
    """``sin(sum_{k in indices} x_k)``, bounded."""
    idx = list(indices)

    def mask(n):
        m = np.zeros(n)
        m[idx] = 1.0
        return m

    def ev(x):
        return np.sin(x[:, idx].sum(axis=1))

    def gr(x):
        return np.cos(x[:, idx].sum(axis=1))[:, None] * mask(x.shape[1])

    def he(x):
        m = mask(x.shape[1])
        return -np.sin(x[:, idx].sum(axis=1))[:, None, None] * np.outer(m, m)

    return SmoothFunction(ev, gr, he, name="sin(" + "+".join(f"x{k + 1}" for k in idx) + ")")


def from_spec(spec) -> SmoothFunction:
    """Build a function from a JSON-style description.

    Accepted forms: ``{"constant": c}``, ``{"monomial": [e1, ...]}``,
    ``{"gaussian_bump": width}`` and ``{"sin_sum": [k, ...]}`` (zero-based).
    """
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ValueError("function spec must be a single-key object")
    (kind, arg), = spec.items()
    if kind == "constant":
        return constant(float(arg))
    if kind == "monomial":
        return monomial(arg)
    if kind == "gaussian_bump":
        return gaussian_bump(float(arg))
    if kind == "sin_sum":
        return sin_sum(arg)
    raise ValueError(f"unknown function kind {kind!r}")
