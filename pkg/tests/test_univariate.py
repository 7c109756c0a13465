import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special, stats

from rbg.baseline import Exponential, Uniform, Weibull
from rbg.errors import DomainError, NonConvergenceError
from rbg.univariate import RBGDistribution, fit_univariate_a, shape_standard_error

E1 = math.exp(-1.0)


def scipy_pdf(a, base, x):
    # independent oracle: Gamma(a) density of -log G(x) times the Jacobian g(x)/G(x)
    G = base.cdf(x)
    return stats.gamma(a).pdf(-np.log(G)) * base.pdf(x) / G


class TestEvaluation:
    def test_pdf_examples(self):
        assert RBGDistribution(1.0, Uniform()).pdf(0.4) == pytest.approx(1.0, abs=1e-15)
        assert RBGDistribution(2.0, Uniform()).pdf(E1) == pytest.approx(1.0, abs=1e-14)

    def test_pdf_integrates_to_one(self):
        d = RBGDistribution(0.5, Uniform())
        val, _ = integrate.quad(d.pdf, 0, 1, limit=200, points=[1e-6, 0.5])
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_cdf_examples(self):
        d = RBGDistribution(2.0, Uniform())
        assert d.cdf(E1) == pytest.approx(0.73575888, abs=1e-8)
        assert d.survival(E1) == pytest.approx(0.26424112, abs=1e-8)
        assert d.cdf(1.0) == 1.0
        assert d.quantile(0.73575888) == pytest.approx(E1, abs=1e-7)

    @pytest.mark.parametrize("base", [Uniform(), Exponential(1.0), Weibull(1.5, 1.0)])
    def test_a_one_reduces_to_baseline(self, base):
        d = RBGDistribution(1.0, base)
        x = base.quantile(np.linspace(0.02, 0.98, 20))
        np.testing.assert_allclose(d.cdf(x), base.cdf(x), rtol=1e-12)
        np.testing.assert_allclose(d.pdf(x), base.pdf(x), rtol=1e-12)
        np.testing.assert_allclose(d.survival(x), 1 - base.cdf(x), rtol=1e-12)

    def test_hazard_examples(self):
        assert RBGDistribution(1.0, Uniform()).hazard(0.5) == pytest.approx(2.0, rel=1e-14)
        x = np.linspace(0.01, 30, 50)
        np.testing.assert_allclose(RBGDistribution(1.0, Exponential(1.0)).hazard(x), 1.0, rtol=1e-12)

    @pytest.mark.parametrize("a", [0.5, 2.0, 5.0])
    def test_matches_gamma_oracle(self, baseline, a):
        d = RBGDistribution(a, baseline)
        x = baseline.quantile(np.linspace(0.03, 0.97, 30))
        np.testing.assert_allclose(d.pdf(x), scipy_pdf(a, baseline, x), rtol=1e-10)
        np.testing.assert_allclose(d.cdf(x), stats.gamma(a).sf(-np.log(baseline.cdf(x))), rtol=1e-10)

    def test_hazard_is_pdf_over_survival(self, rng):
        d = RBGDistribution(2.7, Weibull(1.5, 1.0))
        x = d.sample(50, seed=rng)
        np.testing.assert_allclose(d.hazard(x), d.pdf(x) / d.survival(x), rtol=1e-10)

    @given(st.floats(min_value=0.1, max_value=20.0), st.floats(min_value=1e-6, max_value=1 - 1e-6))
    def test_quantile_roundtrip(self, a, p):
        d = RBGDistribution(a, Exponential(1.0))
        assert d.cdf(d.quantile(p)) == pytest.approx(p, rel=1e-8, abs=1e-12)

    @given(st.floats(min_value=0.1, max_value=20.0), st.floats(min_value=0.001, max_value=0.999))
    def test_cdf_plus_survival(self, a, u):
        d = RBGDistribution(a, Uniform())
        assert d.cdf(u) + d.survival(u) == pytest.approx(1.0, abs=1e-14)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            RBGDistribution(0.0, Uniform())
        d = RBGDistribution(2.0, Uniform())
        with pytest.raises(DomainError):
            d.pdf(math.nan)
        with pytest.raises(DomainError):
            d.quantile(1.5)

    def test_outside_support(self):
        d = RBGDistribution(2.0, Exponential(1.0))
        assert d.pdf(-1.0) == 0.0
        assert d.cdf(-1.0) == 0.0


class TestSampling:
    def test_ks_against_cdf(self):
        d = RBGDistribution(2.0, Uniform())
        x = d.sample(100_000, seed=11)
        res = stats.kstest(x, d.cdf)
        assert res.statistic <= 1.63 / math.sqrt(x.size)

    def test_a_one_matches_baseline(self):
        base = Weibull(1.5, 1.0)
        x = RBGDistribution(1.0, base).sample(20_000, seed=3)
        assert stats.kstest(x, base.cdf).pvalue > 0.01

    def test_seed_determinism(self):
        d = RBGDistribution(0.7, Exponential(2.0))
        np.testing.assert_array_equal(d.sample(100, seed=5), d.sample(100, seed=5))


class TestFit:
    def test_monte_carlo(self):
        x = RBGDistribution(2.0, Uniform()).sample(100_000, seed=21)
        a_hat = fit_univariate_a(x, Uniform())
        se = 1 / math.sqrt(x.size * special.polygamma(1, 2.0))
        assert shape_standard_error(2.0, x.size) == pytest.approx(se, rel=1e-12)
        assert abs(a_hat - 2.0) <= 3 * se

    def test_quantile_grid_converges(self):
        # X = exp(-T) with T on an exact Gamma(a) quantile grid
        a = 3.5
        errors = []
        for n in (100, 1000, 10_000):
            t = stats.gamma(a).ppf((np.arange(n) + 0.5) / n)
            errors.append(abs(fit_univariate_a(np.exp(-t), Uniform()) - a))
        assert errors[0] > errors[1] > errors[2]
        assert errors[2] < 1e-3

    def test_degenerate(self):
        with pytest.raises(NonConvergenceError):
            fit_univariate_a([0.3] * 10, Uniform())
        with pytest.raises(DomainError):
            fit_univariate_a([0.3, 1.2], Uniform())


@pytest.mark.parametrize("base", [Exponential(1.0), Weibull(1.5, 1.0)])
def test_pdf_finite_in_far_tail_for_small_shape(base):
    d = RBGDistribution(0.5, base)
    vals = d.pdf(np.array([50.0, 800.0, 1e5]))
    assert np.all(np.isfinite(vals)) and np.all(vals >= 0)
    assert vals[1] <= vals[0]
