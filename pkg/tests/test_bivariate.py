import math

import numpy as np
import pytest
from scipy import integrate, optimize, special, stats

from rbg.baseline import Exponential, Uniform, Weibull
from rbg.bivariate import (
    BivariateRBG,
    ConditionalSpec,
    MMatrix,
    TiltedConditional,
    conditional_density_rbg,
    conditional_moment_k,
    conditional_of_x_given_y,
    conditional_of_y_given_x,
    dependence_sign,
    gibbs_sample,
    joint_log_density,
    joint_survival,
    marginal_density_x,
    marginal_density_x_closed,
    mode_find,
    model_from_config,
    normalize,
    plrd_local_ratio,
    psi_summary,
)
from rbg.errors import (
    ConditionalNonexistenceError,
    ConfigurationError,
    DomainError,
    NonConvergenceError,
    NonIntegrableError,
)
from rbg.univariate import RBGDistribution

E1 = math.exp(-1.0)
U, E = Uniform(), Exponential(1.0)
# dependent, PLRD configuration with Exponential(1) margins
M_DEP = MMatrix((0.0, 2.0, 1.0, 2.0, 0.3, 0.0, 1.0, 0.0, -0.3))


def batch_means_se(values, batches=50):
    chunks = np.array_split(np.asarray(values, dtype=float), batches)
    means = np.array([c.mean() for c in chunks])
    return means.std(ddof=1) / math.sqrt(batches)


def dep_model():
    return BivariateRBG(E, E, M_DEP)


_PIECES = ((0.0, 1.0), (1.0, 8.0), (8.0, 60.0))


def _nested_quad(h):
    # x-scale double integral over (0, 60)^2 split where the integrand changes character
    def inner(x):
        return sum(integrate.quad(lambda y: h(x, y), a, b, limit=200, epsabs=1e-13, epsrel=1e-11)[0]
                   for a, b in _PIECES)
    return sum(integrate.quad(inner, a, b, limit=200, epsabs=1e-13, epsrel=1e-11)[0] for a, b in _PIECES)


def _q_exp(x):
    # (1, u, v) for the Exponential(1) baseline, written out independently of the library
    s = -math.log1p(-math.exp(-x))
    return np.array([1.0, math.log(s), -x])


@pytest.fixture(scope="module")
def x_scale_oracle():
    """``(log Psi, E[u(X)u(Y)])`` for ``M_DEP`` by nested scipy quadrature on the x scale."""
    M = M_DEP.array()

    def kernel(x, y):
        qx, qy = _q_exp(x), _q_exp(y)
        return math.exp(float(qx @ M @ qy) - qx[1] - qy[1])
    psi = _nested_quad(kernel)
    uu = _nested_quad(lambda x, y: _q_exp(x)[1] * _q_exp(y)[1] * kernel(x, y)) / psi
    return math.log(psi), uu


class TestMMatrix:
    def test_strict_layout(self):
        m = MMatrix.strict(2.0, 3.0, 0.5)
        assert (m.m(1, 0), m.m(0, 1), m.m(1, 1), m.m(2, 0), m.m(0, 2)) == (2.0, 3.0, 0.5, 1.0, 1.0)
        assert m.is_strict and not m.is_independent

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            MMatrix((1.0, 2.0))
        with pytest.raises(ConfigurationError):
            MMatrix((0, 1, 1, 1, math.nan, 0, 1, 0, 0))


class TestConditionalDensity:
    def test_examples(self):
        x = np.linspace(0.05, 3.0, 9)
        one = ConditionalSpec(lambda y: 1.0, lambda x: 1.0, E)
        np.testing.assert_allclose([conditional_density_rbg(v, 0.4, one) for v in x], E.pdf(x), rtol=1e-14)
        two = ConditionalSpec(lambda y: 2.0, lambda x: 2.0, U)
        assert conditional_density_rbg(E1, 0.5, two) == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.parametrize("y", [0.1, 1.0, 3.0])
    def test_integrates_to_one(self, y):
        spec = ConditionalSpec(lambda y: 2.0 + y, lambda x: 1.0, E)
        val, _ = integrate.quad(lambda x: conditional_density_rbg(x, y, spec), 0, np.inf, limit=200)
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_bad_shape(self):
        spec = ConditionalSpec(lambda y: -1.0, lambda x: 1.0, E)
        with pytest.raises(DomainError):
            conditional_density_rbg(1.0, 1.0, spec)


class TestNormalization:
    def test_independence_factorizes(self):
        model = BivariateRBG(U, U, MMatrix.strict(2.0, 2.0))
        x = np.linspace(0.05, 0.95, 7)
        X, Y = np.meshgrid(x, x)
        d = RBGDistribution(2.0, U)
        np.testing.assert_allclose(np.exp(joint_log_density(X, Y, model)), d.pdf(X) * d.pdf(Y), rtol=1e-10)

    @pytest.mark.parametrize("base", [U, E, Weibull(1.5, 1.0)])
    def test_strict_gamma_product(self, base):
        m10, m01 = 2.5, 0.7
        model = BivariateRBG(base, base, MMatrix.strict(m10, m01))
        assert model.log_psi == pytest.approx(special.gammaln(m10) + special.gammaln(m01), abs=1e-9)
        assert normalize(model) == pytest.approx(math.gamma(m10) * math.gamma(m01), rel=1e-9)

    def test_independence_with_tilt_factorizes(self):
        # non-strict but independent: Psi is a product of two 1-D integrals
        m = MMatrix((0.0, 1.5, 0.6, 2.0, 0.0, 0.0, 1.4, 0.0, 0.0))
        model = BivariateRBG(E, Weibull(1.5, 1.0), m)

        def one_dim(base, a1, a2):
            def f(x):
                with np.errstate(divide="ignore"):
                    return np.exp((a1 - 1) * np.log(base.neg_log_cdf(x)) + a2 * base.log_pdf(x))
            return integrate.quad(f, 0, np.inf, limit=400, epsabs=1e-13, epsrel=1e-12)[0]
        ref = math.log(one_dim(E, 2.0, 1.4)) + math.log(one_dim(Weibull(1.5, 1.0), 1.5, 0.6))
        assert model.log_psi == pytest.approx(ref, abs=1e-8)

    def test_dependent_total_mass(self, x_scale_oracle):
        # the oracle integrates the kernel independently; the normalized mass is their ratio
        log_psi, _ = x_scale_oracle
        assert dep_model().log_psi == pytest.approx(log_psi, abs=1e-9)
        assert math.exp(log_psi - dep_model().log_psi) == pytest.approx(1.0, abs=1e-5)

    def test_strict_with_interaction_is_not_integrable(self):
        model = BivariateRBG(E, E, MMatrix.strict(2.0, 2.0, 0.3))
        with pytest.raises(NonIntegrableError):
            normalize(model)
        with pytest.raises(NonIntegrableError):
            joint_log_density(1.0, 1.0, model)

    def test_divergent_general_m(self):
        m = MMatrix((0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.5))
        with pytest.raises(NonIntegrableError):
            normalize(BivariateRBG(E, E, m))

    def test_symmetry(self):
        model = dep_model()
        for x, y in [(0.3, 1.7), (2.0, 0.1), (0.9, 0.9)]:
            assert joint_log_density(x, y, model) == pytest.approx(joint_log_density(y, x, model), abs=1e-14)

    def test_summary_moments_match_direct_quadrature(self, x_scale_oracle):
        _, uu = x_scale_oracle
        assert psi_summary(M_DEP, E, E, order=1).mean[3] == pytest.approx(uu, abs=1e-8)


class TestConditionals:
    def test_strict_conditional_is_rbg(self):
        model = BivariateRBG(U, U, MMatrix.strict(2.0, 3.0))
        law = conditional_of_x_given_y(model, 0.3)
        assert isinstance(law, RBGDistribution) and law.a == pytest.approx(2.0)
        x = np.linspace(0.05, 0.95, 15)
        np.testing.assert_allclose(law.pdf(x), RBGDistribution(2.0, U).pdf(x), rtol=1e-9)
        assert conditional_of_y_given_x(model, 0.3).a == pytest.approx(3.0)

    @pytest.mark.parametrize("y", [0.2, 1.0, 3.0])
    def test_general_conditional_normalized(self, y):
        law = conditional_of_x_given_y(dep_model(), y)
        assert isinstance(law, TiltedConditional)
        val, _ = integrate.quad(law.pdf, 0, np.inf, limit=400, epsabs=1e-12)
        assert val == pytest.approx(1.0, abs=1e-6)
        assert law.cdf(np.array([50.0]))[0] == pytest.approx(1.0, abs=1e-9)

    def test_general_conditional_sampling(self):
        law = conditional_of_x_given_y(dep_model(), 0.7)
        draws = law.sample(20_000, seed=5)
        assert stats.kstest(draws, law.cdf).pvalue > 0.01

    def test_conditional_mean_of_t(self):
        model = BivariateRBG(E, E, MMatrix.strict(2.0, 3.0))
        rep = conditional_moment_k(model, 0.8, 1)
        assert rep.t_moment == pytest.approx(2.0, abs=1e-6)

    def test_moment_examples(self):
        model = BivariateRBG(U, U, MMatrix.strict(2.0, 2.0))
        rep = conditional_moment_k(model, 0.5, 2)
        assert rep.t_moment == pytest.approx(6.0, abs=1e-6)
        assert rep.t_moment_closed == pytest.approx(6.0)
        half = conditional_moment_k(BivariateRBG(U, U, MMatrix.strict(1.0, 2.0)), 0.5, 1)
        assert half.value == pytest.approx(0.5, abs=1e-8)
        assert half.finite

    def test_independence_moment_constant(self):
        model = BivariateRBG(E, E, MMatrix.strict(2.0, 3.0))
        vals = [conditional_moment_k(model, y, 1).value for y in (0.1, 1.0, 4.0)]
        assert max(vals) - min(vals) <= 1e-6
        ref = integrate.quad(lambda x: x * RBGDistribution(2.0, E).pdf(x), 0, np.inf)[0]
        assert vals[0] == pytest.approx(ref, abs=1e-7)

    def test_bad_order(self):
        with pytest.raises(DomainError):
            conditional_moment_k(dep_model(), 1.0, 0)


class TestMarginals:
    def test_independence_marginal(self):
        model = BivariateRBG(E, E, MMatrix.strict(2.0, 3.0))
        x = np.linspace(0.05, 4.0, 12)
        np.testing.assert_allclose(marginal_density_x(model, x), RBGDistribution(2.0, E).pdf(x), rtol=1e-6)

    def test_marginal_integrates_to_one(self):
        model = dep_model()
        val, _ = integrate.quad(lambda x: marginal_density_x(model, x), 0, np.inf, limit=200)
        assert val == pytest.approx(1.0, abs=1e-5)

    def test_two_routes_unnormalized(self):
        # pointwise identity; the m11 != 0 strict kernel has no normalizing constant
        model = BivariateRBG(U, U, MMatrix.strict(2.0, 3.0, 0.3))
        x = np.linspace(0.02, 0.9, 20)
        np.testing.assert_allclose(marginal_density_x(model, x, normalized=False),
                                   marginal_density_x_closed(model, x, normalized=False), rtol=1e-5)

    def test_joint_survival(self):
        model = BivariateRBG(E, E, MMatrix.strict(2.0, 3.0))
        ref = RBGDistribution(2.0, E).survival(0.4) * RBGDistribution(3.0, E).survival(0.7)
        assert joint_survival(model, 0.4, 0.7) == pytest.approx(ref, abs=1e-8)
        dep = dep_model()
        assert joint_survival(dep, 0.0, 0.0) == pytest.approx(1.0, abs=1e-6)


class TestDependence:
    def test_independence_ratio_is_one(self, rng):
        model = BivariateRBG(E, E, MMatrix.strict(2.0, 3.0))
        for _ in range(50):
            x1, x2, y1, y2 = rng.uniform(0.01, 5.0, 4)
            assert plrd_local_ratio(model, x1, x2, y1, y2) == pytest.approx(1.0, abs=1e-14)

    def test_positive_interaction_is_plrd(self, rng):
        model = BivariateRBG(U, U, MMatrix.strict(2.0, 2.0, 0.3))
        for _ in range(200):
            x2, x1 = np.sort(rng.uniform(0.001, 0.999, 2))
            y2, y1 = np.sort(rng.uniform(0.001, 0.999, 2))
            assert plrd_local_ratio(model, x1, x2, y1, y2) >= 1 - 1e-12

    def test_interchange_inverts(self):
        model = dep_model()
        r = plrd_local_ratio(model, 2.0, 0.5, 1.5, 0.2)
        assert r * plrd_local_ratio(model, 2.0, 0.5, 0.2, 1.5) == pytest.approx(1.0, abs=1e-14)

    def test_ratio_matches_densities(self):
        model = dep_model()
        f = lambda x, y: joint_log_density(x, y, model)
        ref = f(2.0, 1.5) + f(0.5, 0.2) - f(2.0, 0.2) - f(0.5, 1.5)
        assert plrd_local_ratio(model, 2.0, 0.5, 1.5, 0.2, log=True) == pytest.approx(ref, abs=1e-12)

    def test_dependence_sign(self):
        assert dependence_sign(MMatrix.strict(2.0, 3.0)).label == "independent"
        # m22/m12 = 0.5 < m20/m10 = 1 < m21/m11 = 2
        pos = dependence_sign(MMatrix((0, 1, 1, 1, 1, 2, 1, 2, 1)))
        assert pos.label == "positive"
        assert pos.ratios == pytest.approx((0.5, 1.0, 2.0))
        assert dependence_sign(MMatrix((0, 1, 1, 1, 2, 1, 1, 1, 2))).label == "negative"
        assert dependence_sign(M_DEP).label == "indeterminate"


class TestMode:
    def test_independence_matches_separable_oracle(self):
        base = Weibull(2.0, 1.0)
        model = BivariateRBG(base, base, MMatrix.strict(2.0, 3.0))
        oracle = [optimize.minimize_scalar(lambda x: -RBGDistribution(a, base).logpdf(x),
                                           bounds=(1e-6, 3.0), method="bounded",
                                           options={"xatol": 1e-12}).x for a in (2.0, 3.0)]
        res = mode_find(model, (0.5, 0.5))
        np.testing.assert_allclose(res.point, oracle, atol=1e-5)
        assert res.gradient_norm <= 1e-8 and res.negative_definite

    def test_gradient_vanishes_by_finite_differences(self):
        model = BivariateRBG(Weibull(2.0, 1.0), Weibull(2.0, 1.0), MMatrix.strict(2.0, 3.0))
        res = mode_find(model, (0.5, 0.5))
        h = 1e-6
        f = lambda x, y: model.log_kernel(x, y)
        x, y = res.point
        gx = (f(x + h, y) - f(x - h, y)) / (2 * h)
        gy = (f(x, y + h) - f(x, y - h)) / (2 * h)
        assert max(abs(gx), abs(gy)) <= 1e-6

    def test_uniform_mode_on_t_scale(self):
        model = BivariateRBG(U, U, MMatrix.strict(2.0, 2.0))
        res = mode_find(model, (0.5, 2.0), scale="t")
        np.testing.assert_allclose(res.point, (1.0, 1.0), atol=1e-8)
        assert np.exp(-np.array(res.point)) == pytest.approx([E1, E1], abs=1e-8)

    def test_uniform_density_has_no_interior_mode(self):
        # (-log x) on (0, 1) increases towards 0, so the x-scale ascent cannot stop
        model = BivariateRBG(U, U, MMatrix.strict(2.0, 2.0))
        with pytest.raises(NonConvergenceError) as info:
            mode_find(model, (E1, E1), max_iter=50)
        assert info.value.trace

    def test_bad_start(self):
        with pytest.raises(DomainError):
            mode_find(dep_model(), (-1.0, 1.0))


class TestGibbs:
    def test_independence_marginal_ks(self):
        model = BivariateRBG(E, E, MMatrix.strict(2.5, 1.5))
        draws = gibbs_sample(model, 100_000, seed=8)
        assert stats.kstest(draws[:, 0], RBGDistribution(2.5, E).cdf).pvalue > 0.01

    def test_dependent_moment_matches_quadrature(self):
        model = dep_model()
        draws = gibbs_sample(model, 20_000, seed=9)
        prod = np.log(E.neg_log_cdf(draws[:, 0])) * np.log(E.neg_log_cdf(draws[:, 1]))
        target = psi_summary(model.m, E, E, order=1).mean[3]
        assert abs(prod.mean() - target) <= 3 * batch_means_se(prod)

    def test_seed_determinism(self):
        model = dep_model()
        np.testing.assert_array_equal(gibbs_sample(model, 50, burn=10, seed=3),
                                      gibbs_sample(model, 50, burn=10, seed=3))

    def test_nonexistent_conditional_reports_state(self):
        model = BivariateRBG(U, U, MMatrix.strict(0.1, 0.1, 0.3))
        with pytest.raises(ConditionalNonexistenceError) as info:
            gibbs_sample(model, 1000, seed=1)
        assert "sweep" in info.value.state

    def test_thinning_shape(self):
        out = gibbs_sample(BivariateRBG(U, U, MMatrix.strict(2.0, 2.0)), 30, burn=5, thin=3, seed=1)
        assert out.shape == (30, 2)


class TestConfig:
    def test_from_config(self):
        model = model_from_config({"baseline_x": "exponential:rate=1", "baseline_y": "exponential",
                                   "M": list(M_DEP.entries), "quadrature": {"nodes": 21}})
        assert model.m == M_DEP and model.quad.node_count == 21
        strict = model_from_config({"baseline_x": "uniform", "baseline_y": "uniform",
                                    "strict": {"m10": 2, "m01": 3}})
        assert strict.m == MMatrix.strict(2.0, 3.0)

    @pytest.mark.parametrize("cfg", [
        {"baseline_x": "uniform"},
        {"baseline_x": "uniform", "baseline_y": "uniform"},
        {"baseline_x": "uniform", "baseline_y": "uniform", "M": [1, 2]},
        {"baseline_x": "nope", "baseline_y": "uniform", "strict": {"m10": 1, "m01": 1}},
    ])
    def test_bad_config(self, cfg):
        with pytest.raises(ConfigurationError):
            model_from_config(cfg)
