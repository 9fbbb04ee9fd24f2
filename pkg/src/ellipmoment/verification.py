"""The acceptance suite behind ``ellipmoment verify``.

Each check returns a list of run records
``{"check", "family", "n", "expected", "got", "tolerance", "pass"}``;
extra keys carry context.  All randomness is derived from one seed.
"""

from __future__ import annotations

import itertools
import math
import time

import numpy as np
from scipy import stats

from . import __version__
from .elliptical import EllipticalDistribution, associated_distributions
from .generators import FamilyKind, GeneratorFamily, normalizing_constants, parse_family
from .linalg import mahalanobis_half
from .moments import (
    Budget,
    InnerExpectations,
    NormalMomentTable,
    combine_thm1,
    combine_thm2,
    normal_power_moment,
    product_moment,
    x1sq_moment_thm1,
)
from .oracles import elliptical_moment, isserlis_moment, mc_expectation
from .smooth import constant, gaussian_bump, monomial, sin_sum

__all__ = ["FAMILIES", "CHECKS", "run_verification", "case_seed"]

FAMILIES = ("normal", "t(p=5)", "t(p=6)", "t(p=10)", "logistic", "laplace")
THM1_FAMILIES = ("normal", "t(p=9)", "laplace", "logistic")
SIGMA2 = np.array([[2.0, 1.0], [1.0, 2.0]])
KS_DRAWS = 100_000
KS_CRIT = 1.63


def case_seed(seed: int, *key: int) -> int:
    """Independent 63-bit seed for one case of one check."""
    return int(np.random.SeedSequence([seed, *key]).generate_state(2, np.uint64)[0] >> np.uint64(1))


def _run(check, family, n, expected, got, tol, ok, **extra) -> dict:
    rec = {"check": check, "family": str(family), "n": n, "expected": expected,
           "got": got, "tolerance": tol, "pass": bool(ok)}
    rec.update(extra)
    return rec


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b) if b else abs(a)


def _random_spd(rng, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n))
    return a @ a.T + 0.5 * np.eye(n)


def _family_tol(fam: str) -> float:
    return 1e-7 if fam == "logistic" else 1e-9


# ---------------------------------------------------------------------------


def check_constants(seed: int, samples: int) -> list:
    runs = []
    for fam in FAMILIES:
        for n in (1, 2, 3, 5):
            k = normalizing_constants(parse_family(fam), n, cross_check=True)
            tol = _family_tol(fam)
            runs.append(_run("constants_cross_check", fam, n, 0.0, k.discrepancy, tol, k.discrepancy <= tol))
    return runs


def check_reference_values(seed: int, samples: int) -> list:
    runs = []
    c2 = normalizing_constants(GeneratorFamily.logistic(), 2).c
    runs.append(_run("logistic_c2", "logistic", 2, 1.0 / math.pi, c2, 1e-10, _rel(c2, 1.0 / math.pi) <= 1e-10))
    for n in range(1, 6):
        k = normalizing_constants(GeneratorFamily.laplace(), n)
        runs.append(_run("laplace_b_star", "laplace", n, n + 1.0, k.b_star, 1e-10,
                         _rel(k.b_star, n + 1.0) <= 1e-10))
        want = (n + 1.0) * (n + 3.0)
        runs.append(_run("laplace_b_dstar", "laplace", n, want, k.b_dstar, 1e-10, _rel(k.b_dstar, want) <= 1e-10))
    for n in range(1, 6):
        k = normalizing_constants(GeneratorFamily.normal(), n)
        runs.append(_run("normal_b_star", "normal", n, 1.0, k.b_star, 0.0, k.b_star == 1.0))
        runs.append(_run("normal_b_dstar", "normal", n, 1.0, k.b_dstar, 0.0, k.b_dstar == 1.0))
    return runs


def _cov_check(x: np.ndarray, target: np.ndarray):
    """Entrywise sample covariance with delta-method standard errors."""
    xc = x - x.mean(axis=0)
    out = []
    for i, j in ((0, 0), (0, 1), (1, 1)):
        prod = xc[:, i] * xc[:, j]
        cov = float(prod.mean())
        se = float(prod.std(ddof=1) / math.sqrt(len(prod)))
        out.append(((i, j), float(target[i, j]), cov, se))
    return out


def check_covariance(seed: int, samples: int) -> list:
    runs = []
    draws = 2 * samples
    mu = np.array([0.5, -1.0])
    for idx, fam in enumerate(FAMILIES):
        d = EllipticalDistribution.create(fam, mu, SIGMA2)
        star = associated_distributions(d)[0]
        laws = [("cov_X", d, d.b_star)]
        # sample variance needs finite fourth moments of X*
        if d.family.kind is not FamilyKind.STUDENT_T or d.family.p > 6:
            laws.append(("cov_X_star", star, d.b_dstar / d.b_star))
        for name, law, scale in laws:
            x = law.sample(case_seed(seed, 3, idx, len(name)), draws)
            for (i, j), want, got, se in _cov_check(x, scale * SIGMA2):
                runs.append(_run(name, fam, 2, want, got, 3.0 * se, abs(got - want) <= 3.0 * se, entry=[i, j]))
    return runs


def check_student_t(seed: int, samples: int) -> list:
    runs = []
    for p in (5, 6, 10):
        fam = GeneratorFamily.student_t(p)
        for n in (1, 2, 3, 5):
            k = normalizing_constants(fam, n, cross_check=True)
            qc, qs, qd = k.quadrature
            b1, b2 = qc / qs, qc / qd
            cand1 = {"p/(p-2)": p / (p - 2.0), "p^2/(p-2)": p * p / (p - 2.0)}
            cand2 = {"p^2/((p-2)(p-4))": p * p / ((p - 2.0) * (p - 4.0)), "p/((p-2)(p-4))": p / ((p - 2.0) * (p - 4.0))}
            for name, got, cand, want_key in (("t_b_star", b1, cand1, "p/(p-2)"),
                                              ("t_b_dstar", b2, cand2, "p^2/((p-2)(p-4))")):
                want = cand[want_key]
                supported = min(cand, key=lambda c: _rel(got, cand[c]))
                runs.append(_run(name, fam, n, want, got, 1e-9, _rel(got, want) <= 1e-9,
                                 candidates=cand, supported=supported))
    return runs


def _thm1_functions():
    return (("x2^2", lambda n: monomial((0, 2) + (0,) * (n - 2))),
            ("exp(-|x|^2/4)", lambda n: gaussian_bump(4.0)),
            ("sin(x1+x2)", lambda n: sin_sum((0, 1))))


def check_thm1_mc(seed: int, samples: int) -> list:
    runs = []
    rng = np.random.default_rng(case_seed(seed, 5))
    for fi, fam in enumerate(THM1_FAMILIES):
        for n in (2, 3):
            mu = np.round(rng.uniform(-0.5, 0.5, n), 3)
            sigma = _random_spd(rng, n) if n == 3 else SIGMA2
            d = EllipticalDistribution.create(fam, mu, sigma)
            for gi, (name, make) in enumerate(_thm1_functions()):
                f = make(n)
                est = x1sq_moment_thm1(d, f, Budget(samples=samples, seed=case_seed(seed, 5, fi, n, gi, 0)))
                mc = mc_expectation(d, lambda x: x[:, 0] ** 2 * f.value(x), samples,
                                    case_seed(seed, 5, fi, n, gi, 1))
                se = math.hypot(est.stderr, mc.stderr)
                runs.append(_run("thm1_vs_mc", fam, n, mc.mean, est.value, 3.0 * se,
                                 abs(est.value - mc.mean) <= 3.0 * se, function=name))
    return runs


def check_thm1_thm2(seed: int, samples: int) -> list:
    rng = np.random.default_rng(case_seed(seed, 6))
    worst = {}
    count = {}
    for i in range(200):
        fam = FAMILIES[i % len(FAMILIES)]
        n = 1 + i % 5
        k = normalizing_constants(parse_family(fam), n, cross_check=False)
        sigma = _random_spd(rng, n)
        h = rng.standard_normal((n, n))
        inner = InnerExpectations(float(rng.standard_normal()), float(rng.standard_normal()),
                                  rng.standard_normal(n), h + h.T)
        mu1 = float(rng.standard_normal())
        a = math.fsum(combine_thm1(inner, sigma, mu1, k.b_star, k.b_dstar).values())
        b = math.fsum(combine_thm2(inner, sigma, mu1, k.phi_slope, k.phi_star_slope).values())
        gap = abs(a - b) / (1.0 + abs(a))
        worst[fam] = max(worst.get(fam, 0.0), gap)
        count[fam] = count.get(fam, 0) + 1
    return [_run("thm1_equals_thm2", fam, 0, 0.0, worst[fam], 1e-12, worst[fam] <= 1e-12, instances=count[fam])
            for fam in FAMILIES]


def check_normal_recursion(seed: int, samples: int) -> list:
    rng = np.random.default_rng(case_seed(seed, 7))
    worst = {}
    count = {}
    for inst in range(50):
        n = 1 + inst % 4
        mu = rng.standard_normal(n)
        sigma = _random_spd(rng, n)
        table = NormalMomentTable(mu, sigma)
        cache: dict = {}
        for e in itertools.product(range(9), repeat=n):
            if sum(e) > 8:
                continue
            want = isserlis_moment(mu, sigma, e, cache)
            got = table(e)
            err = abs(got - want) / abs(want) if want else abs(got)
            worst[n] = max(worst.get(n, 0.0), err)
            count[n] = count.get(n, 0) + 1
    return [_run("normal_recursion_vs_isserlis", "normal", n, 0.0, worst[n], 1e-9, worst[n] <= 1e-9,
                 moments=count[n]) for n in sorted(worst)]


def check_radial_ks(seed: int, samples: int) -> list:
    runs = []
    crit = KS_CRIT / math.sqrt(KS_DRAWS)
    for fi, fam in enumerate(FAMILIES):
        for n in (2, 5):
            d = EllipticalDistribution.create(fam, np.zeros(n), np.eye(n) + 0.3)
            x = d.sample(case_seed(seed, 8, fi, n), KS_DRAWS)
            r = np.sqrt(2.0 * mahalanobis_half(d.factor, x, d.mu))
            ks = float(stats.kstest(r, d.radial.cdf).statistic)
            runs.append(_run("radial_ks", fam, n, 0.0, ks, crit, ks < crit))
    return runs


def check_constant_collapse(seed: int, samples: int) -> list:
    rng = np.random.default_rng(case_seed(seed, 9))
    runs = []
    one = constant(1.0)
    for fam in FAMILIES:
        worst = 0.0
        stochastic = 0.0
        for i in range(20):
            n = 1 + i % 4
            mu = rng.standard_normal(n)
            sigma = _random_spd(rng, n)
            d = EllipticalDistribution.create(fam, mu, sigma)
            est = x1sq_moment_thm1(d, one, Budget(samples=2, seed=0))
            want = sigma[0, 0] * d.b_star + mu[0] ** 2
            worst = max(worst, abs(est.value - want) / max(1.0, abs(want)))
            stochastic = max(stochastic, est.stderr)
        runs.append(_run("constant_f_collapse", fam, 0, 0.0, worst, 1e-12, worst <= 1e-12 and stochastic == 0.0))
    return runs


CHECKS = {
    "constants": check_constants,
    "reference_values": check_reference_values,
    "covariance": check_covariance,
    "student_t": check_student_t,
    "thm1_mc": check_thm1_mc,
    "thm1_thm2": check_thm1_thm2,
    "normal_recursion": check_normal_recursion,
    "radial_ks": check_radial_ks,
    "constant_collapse": check_constant_collapse,
}


# ---------------------------------------------------------------------------
# findings that compare alternative readings of an identity


def product_moment_findings() -> list:
    """Exact product moments against the derived and the display expansions."""
    out = []
    sigma = np.array([[1.5, 0.4], [0.4, 1.0]])
    for fam in ("laplace", "logistic", "t(p=12)"):
        d = EllipticalDistribution.create(fam, [0.7, -0.3], sigma)
        for e in ((3, 1), (4, 1), (5, 0)):
            exact = elliptical_moment(d, e)
            budget = Budget(method="quadrature")
            derived = product_moment(d, e, budget).value
            display = product_moment(d, e, budget, form="display").value
            out.append({"family": fam, "exponents": list(e), "exact": exact, "derived": derived,
                        "display": display, "derived_rel_error": _rel(derived, exact),
                        "display_rel_error": _rel(display, exact)})
    return out


def power_moment_findings() -> list:
    """``E[X_1^3 X_2]`` for a standard bivariate Normal with correlation ``rho``."""
    out = []
    for rho in (0.3, -0.6):
        d = EllipticalDistribution.create("normal", [0.0, 0.0], [[1.0, rho], [rho, 1.0]])
        got = normal_power_moment(d, 3, monomial((0, 1)), Budget(method="quadrature")).value
        out.append({"rho": rho, "exact": 3.0 * rho, "with_cross_term": got, "without_cross_term": rho})
    return out


def run_verification(seed: int = 42, samples: int = 1_000_000, checks=None, timing: bool = False,
                     progress=None) -> dict:
    """Run the suite and return the report as a plain dict."""
    names = list(CHECKS) if checks is None else list(checks)
    runs = []
    elapsed = {}
    for name in names:
        t0 = time.perf_counter()
        got = CHECKS[name](seed, samples)
        elapsed[name] = time.perf_counter() - t0
        runs.extend(got)
        if progress is not None:
            progress(name, got, elapsed[name])
    meta = {"seed": seed, "samples": samples, "version": __version__, "checks": names}
    if timing:
        meta["wall_time"] = elapsed
    return {
        "metadata": meta,
        "runs": runs,
        "findings": {"product_moment": product_moment_findings(), "power_moment": power_moment_findings()},
        "pass": all(r["pass"] for r in runs),
    }
