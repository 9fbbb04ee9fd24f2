import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ellipmoment.elliptical import EllipticalDistribution
from ellipmoment.errors import (
    DimensionError,
    FamilyMismatchError,
    MomentNonexistenceError,
    SingularFactorError,
)
from ellipmoment.moments import (
    Budget,
    InnerExpectations,
    MomentEstimate,
    NormalMomentTable,
    combine_thm1,
    combine_thm2,
    normal_power_moment,
    normal_product_moment,
    product_moment,
    stein_first_moment,
    x1sq_moment_thm1,
    x1sq_moment_thm2,
)
from ellipmoment.oracles import elliptical_moment, isserlis_moment, mc_expectation, quad_expectation
from ellipmoment.smooth import constant, gaussian_bump, linear_combination, monomial, sin_sum

SIGMA2 = np.array([[2.0, 1.0], [1.0, 2.0]])
QUAD = Budget(method="quadrature")
FAMILIES = ["normal", "t(p=9)", "logistic", "laplace"]


def _random_spd(rng, n):
    a = rng.standard_normal((n, n))
    return a @ a.T + 0.5 * np.eye(n)


class TestBudget:
    def test_defaults(self):
        b = Budget()
        assert (b.method, b.samples, b.seed) == ("mc", 100_000, 0)

    @pytest.mark.parametrize("kw", [{"method": "qmc"}, {"samples": 1}, {"method": "quadrature", "nodes_per_dim": 1}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            Budget(**kw)

    def test_from_dict(self):
        assert Budget.from_dict({"method": "quadrature", "nodes_per_dim": 32}).nodes_per_dim == 32
        with pytest.raises(ValueError, match="unknown budget keys"):
            Budget.from_dict({"sample": 10})

    def test_estimate_validation(self):
        with pytest.raises(ValueError):
            MomentEstimate(1.0, -1.0, "thm1")
        with pytest.raises(ValueError):
            MomentEstimate(1.0, 0.0, "guess")


class TestStein:
    def test_bilinear_normal(self):
        mu = np.array([0.5, -1.5])
        d = EllipticalDistribution.create("normal", mu, SIGMA2)
        est = stein_first_moment(d, monomial((0, 1)), QUAD)
        assert est.value == pytest.approx(1.0 + 0.5 * -1.5, abs=1e-10)
        est = stein_first_moment(d, monomial((0, 1)), Budget(samples=200_000, seed=3))
        assert abs(est.value - 0.25) <= 3 * est.stderr

    def test_constant(self):
        d = EllipticalDistribution.create("laplace", [0.7, 0.0], SIGMA2)
        est = stein_first_moment(d, constant(1.0))
        assert est.value == 0.7 and est.stderr == 0.0

    def test_symmetry_student(self):
        d = EllipticalDistribution.create("t(p=9)", [0.0, 0.0], SIGMA2)
        est = stein_first_moment(d, monomial((0, 2)), Budget(samples=1_000_000, seed=7))
        assert abs(est.value) <= 3 * est.stderr

    @pytest.mark.parametrize("fam", FAMILIES)
    def test_against_mc(self, fam):
        d = EllipticalDistribution.create(fam, [0.4, -0.3], SIGMA2)
        f = sin_sum((0, 1))
        est = stein_first_moment(d, f, Budget(samples=400_000, seed=1))
        ref = mc_expectation(d, lambda x: x[:, 0] * f.value(x), 400_000, 2)
        assert abs(est.value - ref.mean) <= 3 * math.hypot(est.stderr, ref.stderr)

    def test_shift_equivariance(self):
        shift = np.array([1.0, -2.0])
        d0 = EllipticalDistribution.create("logistic", [0.0, 0.0], SIGMA2)
        d1 = EllipticalDistribution.create("logistic", shift, SIGMA2)
        bump = gaussian_bump(4.0)
        from ellipmoment.smooth import SmoothFunction

        g = SmoothFunction(lambda x: bump.value(x - shift), lambda x: bump.gradient(x - shift))
        a = stein_first_moment(d1, g, QUAD).value
        b = stein_first_moment(d0, bump, QUAD).value + shift[0] * quad_expectation(d0, bump.value)
        assert a == pytest.approx(b, rel=1e-10)

    def test_index(self):
        mu = np.array([0.5, -1.5, 0.2])
        s = np.eye(3) + 0.3
        d = EllipticalDistribution.create("normal", mu, s)
        est = stein_first_moment(d, monomial((1, 0, 0)), QUAD, index=2)
        assert est.value == pytest.approx(s[2, 0] + mu[2] * mu[0], rel=1e-10)


class TestThm1:
    def test_normal_x2sq(self):
        d = EllipticalDistribution.create("normal", [0, 0], np.eye(2))
        est = x1sq_moment_thm1(d, monomial((0, 2)), QUAD)
        assert est.value == pytest.approx(1.0, abs=1e-10)
        assert est.breakdown["hessian_dstar"] == pytest.approx(0.0, abs=1e-12)

    def test_laplace_constant(self):
        d = EllipticalDistribution.create("laplace", [0, 0], np.eye(2))
        est = x1sq_moment_thm1(d, constant(1.0))
        assert est.value == pytest.approx(3.0, rel=1e-12) and est.stderr == 0.0

    @pytest.mark.parametrize("fam", FAMILIES + ["t(p=5)", "t(p=3)"])
    def test_constant_collapse(self, fam):
        rng = np.random.default_rng(4)
        for n in (1, 2, 4):
            mu = rng.standard_normal(n)
            s = _random_spd(rng, n)
            d = EllipticalDistribution.create(fam, mu, s)
            est = x1sq_moment_thm1(d, constant(1.0))
            assert est.value == pytest.approx(s[0, 0] * d.b_star + mu[0] ** 2, rel=1e-12)

    @pytest.mark.parametrize("fam", FAMILIES)
    @pytest.mark.parametrize("f", [monomial((0, 2)), gaussian_bump(4.0), sin_sum((0, 1))], ids=["x2sq", "bump", "sin"])
    def test_quadrature_matches_oracle(self, fam, f):
        d = EllipticalDistribution.create(fam, [0.3, -0.4], SIGMA2)
        # heavy tails with an oscillating factor need a finer rule
        est = x1sq_moment_thm1(d, f, Budget(method="quadrature", nodes_per_dim=160))
        ref = quad_expectation(d, lambda x: x[:, 0] ** 2 * f.value(x), 160)
        assert est.value == pytest.approx(ref, rel=1e-8, abs=1e-10)

    def test_mc_path(self):
        d = EllipticalDistribution.create("laplace", [0.3, -0.4], SIGMA2)
        f = gaussian_bump(4.0)
        est = x1sq_moment_thm1(d, f, Budget(samples=200_000, seed=5))
        ref = quad_expectation(d, lambda x: x[:, 0] ** 2 * f.value(x))
        assert est.stderr > 0
        assert abs(est.value - ref) <= 4 * est.stderr

    def test_seed_reproducible(self):
        d = EllipticalDistribution.create("logistic", [0.3, -0.4], SIGMA2)
        a = x1sq_moment_thm1(d, sin_sum(), Budget(samples=50_000, seed=9))
        b = x1sq_moment_thm1(d, sin_sum(), Budget(samples=50_000, seed=9, workers=3))
        assert a == b

    def test_breakdown_sums(self):
        d = EllipticalDistribution.create("t(p=9)", [0.3, -0.4], SIGMA2)
        est = x1sq_moment_thm1(d, sin_sum(), Budget(samples=50_000, seed=2))
        assert set(est.breakdown) == {"scale_f_star", "hessian_dstar", "gradient_star", "location_f"}
        assert math.fsum(est.breakdown.values()) == pytest.approx(est.value, abs=1e-12)

    def test_singular(self):
        d = EllipticalDistribution.create("normal", [0, 0], [[1, 1], [1, 1]])
        with pytest.raises(SingularFactorError):
            x1sq_moment_thm1(d, monomial((0, 2)))

    def test_student_gate(self):
        d = EllipticalDistribution.create("t(p=3)", [0, 0], np.eye(2))
        with pytest.raises(Exception):
            x1sq_moment_thm1(d, monomial((0, 2)))

    def test_index(self):
        mu = np.array([0.2, 0.5, -0.3])
        s = np.eye(3) + 0.4
        d = EllipticalDistribution.create("laplace", mu, s)
        est = x1sq_moment_thm1(d, monomial((1, 0, 0)), QUAD, index=1)
        assert est.value == pytest.approx(elliptical_moment(d, (1, 2, 0)), rel=1e-9)
        with pytest.raises(DimensionError):
            x1sq_moment_thm1(d, constant(), index=3)

    def test_linearity_crn(self):
        d = EllipticalDistribution.create("logistic", [0.3, -0.4], SIGMA2)
        b = Budget(samples=50_000, seed=8)
        f1, f2 = gaussian_bump(4.0), sin_sum()
        combo = x1sq_moment_thm1(d, linear_combination([(2.0, f1), (-0.5, f2)]), b)
        sep = 2.0 * x1sq_moment_thm1(d, f1, b).value - 0.5 * x1sq_moment_thm1(d, f2, b).value
        assert combo.value == pytest.approx(sep, rel=1e-12, abs=1e-12)

    def test_linearity_quadrature(self):
        d = EllipticalDistribution.create("t(p=9)", [0.3, -0.4], SIGMA2)
        f1, f2 = monomial((0, 2)), sin_sum()
        combo = x1sq_moment_thm1(d, linear_combination([(1.5, f1), (3.0, f2)]), QUAD).value
        sep = 1.5 * x1sq_moment_thm1(d, f1, QUAD).value + 3.0 * x1sq_moment_thm1(d, f2, QUAD).value
        assert combo == pytest.approx(sep, rel=1e-12)


class TestThm2:
    def test_rank_one(self):
        d = EllipticalDistribution.create("normal", [0, 0], [[1, 1], [1, 1]])
        est = x1sq_moment_thm2(d, monomial((0, 2)), Budget(samples=400_000, seed=0))
        assert abs(est.value - 3.0) <= 3 * est.stderr

    def test_constant_matches_thm1(self):
        for fam in FAMILIES:
            d = EllipticalDistribution.create(fam, [0.6, 0.1], SIGMA2)
            assert x1sq_moment_thm2(d, constant()).value == pytest.approx(x1sq_moment_thm1(d, constant()).value, rel=1e-14)

    def test_injected_equality(self):
        rng = np.random.default_rng(10)
        d = EllipticalDistribution.create("t(p=10)", rng.standard_normal(3), _random_spd(rng, 3))
        k = d.constants
        inner = InnerExpectations(0.4, 0.3, rng.standard_normal(3), _random_spd(rng, 3))
        a = math.fsum(combine_thm1(inner, d.sigma, d.mu[0], k.b_star, k.b_dstar).values())
        b = math.fsum(combine_thm2(inner, d.sigma, d.mu[0], k.phi_slope, k.phi_star_slope).values())
        assert abs(a - b) <= 1e-12 * (1 + abs(a))

    def test_quadrature_matches_thm1(self):
        d = EllipticalDistribution.create("laplace", [0.3, -0.4], SIGMA2)
        f = gaussian_bump()
        assert x1sq_moment_thm2(d, f, QUAD).value == pytest.approx(x1sq_moment_thm1(d, f, QUAD).value, rel=1e-13)


class TestProductMoment:
    @pytest.mark.parametrize("fam,sigma,e,want", [
        ("normal", np.eye(2), (2, 0), 1.0),
        ("normal", SIGMA2, (2, 2), 6.0),
        ("laplace", np.eye(2), (2, 0), 3.0),
    ])
    def test_examples(self, fam, sigma, e, want):
        d = EllipticalDistribution.create(fam, [0, 0], sigma)
        assert product_moment(d, e, QUAD).value == pytest.approx(want, rel=1e-10)

    @pytest.mark.parametrize("fam", ["t(p=9)", "logistic", "laplace"])
    @pytest.mark.parametrize("e", [(2, 1), (3, 1), (4, 0), (2, 2), (3, 2)])
    def test_derived_matches_exact(self, fam, e):
        d = EllipticalDistribution.create(fam, [0.5, -0.3], SIGMA2)
        assert product_moment(d, e, QUAD).value == pytest.approx(elliptical_moment(d, e), rel=1e-9)

    def test_display_form_differs_with_location(self):
        d = EllipticalDistribution.create("laplace", [1.0, 0.0], np.eye(2))
        exact = elliptical_moment(d, (5, 0))
        derived = product_moment(d, (5, 0), QUAD)
        display = product_moment(d, (5, 0), QUAD, form="display")
        assert derived.value == pytest.approx(exact, rel=1e-10)
        assert abs(display.value - exact) > 1.0
        assert "display_shift" in display.breakdown

    def test_display_equal_when_centred(self):
        d = EllipticalDistribution.create("laplace", [0.0, 0.5], np.eye(2))
        a = product_moment(d, (3, 1), QUAD).value
        b = product_moment(d, (3, 1), QUAD, form="display").value
        assert a == b

    def test_errors(self):
        d = EllipticalDistribution.create("t(p=5)", [0, 0], np.eye(2))
        with pytest.raises(MomentNonexistenceError):
            product_moment(d, (3, 2))
        with pytest.raises(ValueError):
            product_moment(d, (1, 1))
        with pytest.raises(DimensionError):
            product_moment(d, (2, 0, 0))
        with pytest.raises(ValueError):
            product_moment(d, (2, 0), form="printed")

    def test_normal_is_recursion(self):
        d = EllipticalDistribution.create("normal", [0.1, 0.2], SIGMA2)
        est = product_moment(d, (3, 2))
        assert est.method == "recursion" and est.stderr == 0.0


class TestNormalRecursion:
    def test_examples(self):
        assert normal_product_moment([0.0], [[1.0]], (4,)) == pytest.approx(3.0, rel=1e-14)
        assert normal_product_moment([0.7], [[2.5]], (2,)) == pytest.approx(2.5 + 0.49, rel=1e-14)
        rho = 0.3
        assert normal_product_moment([0, 0], [[1, rho], [rho, 1]], (3, 1)) == pytest.approx(3 * rho, rel=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.data())
    def test_matches_isserlis(self, seed, n, data):
        rng = np.random.default_rng(seed)
        mu = rng.standard_normal(n)
        s = _random_spd(rng, n)
        e = tuple(data.draw(st.lists(st.integers(0, 3), min_size=n, max_size=n)))
        ref = isserlis_moment(mu, s, e)
        assert normal_product_moment(mu, s, e) == pytest.approx(ref, rel=1e-9, abs=1e-9 * max(1.0, abs(ref)))

    def test_table_shared(self):
        t = NormalMomentTable([0.2, 0.1], SIGMA2)
        assert t((2, 2)) == pytest.approx(isserlis_moment([0.2, 0.1], SIGMA2, (2, 2)), rel=1e-13)
        assert normal_product_moment([0.2, 0.1], SIGMA2, (0, 4), table=t) == pytest.approx(
            isserlis_moment([0.2, 0.1], SIGMA2, (0, 4)), rel=1e-13)

    def test_psd(self):
        assert normal_product_moment([0, 0], [[1, 1], [1, 1]], (2, 2)) == pytest.approx(3.0, rel=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            NormalMomentTable([0.0], SIGMA2)


class TestNormalPower:
    def test_examples(self):
        mu = np.array([0.4, 0.0])
        d = EllipticalDistribution.create("normal", mu, SIGMA2)
        assert normal_power_moment(d, 2, constant()).value == pytest.approx(2.0 + 0.16, rel=1e-14)
        d0 = EllipticalDistribution.create("normal", [0, 0], np.eye(2))
        assert normal_power_moment(d0, 4, constant()).value == pytest.approx(3.0, rel=1e-14)

    def test_cross_term(self):
        rho = 0.4
        d = EllipticalDistribution.create("normal", [0, 0], [[1, rho], [rho, 1]])
        est = normal_power_moment(d, 3, monomial((0, 1)), QUAD)
        assert est.value == pytest.approx(3 * rho, rel=1e-10)
        assert est.value == pytest.approx(normal_product_moment(d.mu, d.sigma, (3, 1)), rel=1e-10)

    def test_family_mismatch(self):
        d = EllipticalDistribution.create("laplace", [0, 0], np.eye(2))
        with pytest.raises(FamilyMismatchError):
            normal_power_moment(d, 3, constant())

    def test_p1_too_small(self):
        d = EllipticalDistribution.create("normal", [0, 0], np.eye(2))
        with pytest.raises(ValueError):
            normal_power_moment(d, 1, constant())

    def test_index(self):
        mu = np.array([0.3, -0.2])
        d = EllipticalDistribution.create("normal", mu, SIGMA2)
        est = normal_power_moment(d, 3, monomial((2, 0)), QUAD, index=1)
        assert est.value == pytest.approx(isserlis_moment(mu, SIGMA2, (2, 3)), rel=1e-10)
