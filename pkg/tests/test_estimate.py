import math

import numpy as np
import pytest
from scipy import special

from rbg.baseline import Exponential, Uniform
from rbg.bivariate import BivariateRBG, MMatrix, gibbs_sample
from rbg.errors import DomainError, NonIntegrableError
from rbg.estimate import (
    DEFAULT_SWEEP,
    ThetaVector,
    fisher_information,
    fit_mle,
    likelihood_residuals,
    log_likelihood,
    log_psi,
    sufficient_stats,
)
from rbg.numerics import QuadratureSpec, finite_diff_gradient
from rbg.univariate import RBGDistribution

E1 = math.exp(-1.0)
U, E = Uniform(), Exponential(1.0)
EE, UU = (E, E), (U, U)
# interior dependent configuration (all eight parameters identifiable with Exponential margins)
THETA_DEP = ThetaVector.from_m(MMatrix((0.0, 2.0, 1.0, 2.0, 0.3, 0.0, 1.0, 0.0, -0.8)))
THETA_IND = ThetaVector.from_m(MMatrix.strict(2.0, 2.0))
TEST_MATRIX = [THETA_IND, THETA_DEP, ThetaVector((1.5, 1.2, 3.0, 0.1, 0.0, 0.8, 0.0, -0.2))]


@pytest.fixture(scope="module")
def dep_data():
    return gibbs_sample(BivariateRBG(E, E, THETA_DEP.to_m()), 3000, seed=12)


@pytest.fixture(scope="module")
def ind_data():
    return gibbs_sample(BivariateRBG(E, E, THETA_IND.to_m()), 5000, seed=3)


class TestThetaVector:
    def test_mapping(self):
        m = MMatrix((0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0))
        theta = ThetaVector.from_m(m)
        assert theta.values == (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0)
        assert theta.to_m() == m

    def test_validation(self):
        with pytest.raises(DomainError):
            ThetaVector((1.0, 2.0))
        with pytest.raises(DomainError):
            ThetaVector((math.inf,) * 8)


class TestSufficientStats:
    def test_single_point_is_zero(self):
        st = sufficient_stats([[E1, E1]], UU)
        np.testing.assert_allclose(st.means, 0.0, atol=1e-15)
        assert st.n == 1

    def test_duplicates_and_order(self, rng):
        data = rng.uniform(0.05, 3.0, (20, 2))
        one = sufficient_stats(data[:1], EE)
        two = sufficient_stats(np.vstack([data[:1], data[:1]]), EE)
        np.testing.assert_allclose(one.means, two.means, rtol=1e-15)
        shuffled = sufficient_stats(data[rng.permutation(20)], EE)
        np.testing.assert_allclose(shuffled.means, sufficient_stats(data, EE).means, rtol=1e-14)

    def test_outside_support(self):
        with pytest.raises(DomainError, match="indices 1"):
            sufficient_stats([[0.2, 0.3], [1.5, 0.3]], UU)
        with pytest.raises(DomainError):
            sufficient_stats([0.2, 0.3], UU)


class TestLogPsi:
    def test_strict_gamma_product(self):
        theta = ThetaVector.from_m(MMatrix.strict(3.2, 1.4))
        assert log_psi(theta, UU) == pytest.approx(special.gammaln(3.2) + special.gammaln(1.4), abs=1e-10)

    def test_finite_and_refinement_stable(self):
        fine = QuadratureSpec(node_count=40)
        for theta in TEST_MATRIX:
            lp = log_psi(theta, EE)
            assert math.isfinite(lp)
            assert abs(lp - log_psi(theta, EE, fine)) < 1e-6

    def test_strict_interaction_not_integrable(self):
        with pytest.raises(NonIntegrableError):
            log_psi(ThetaVector.from_m(MMatrix.strict(2.0, 2.0, 0.3)), EE)


class TestLikelihood:
    def test_independence_factorizes(self, rng):
        data = np.column_stack([RBGDistribution(2.0, E).sample(100, seed=rng),
                                RBGDistribution(3.0, E).sample(100, seed=rng)])
        theta = ThetaVector.from_m(MMatrix.strict(2.0, 3.0))
        ref = (np.sum(RBGDistribution(2.0, E).logpdf(data[:, 0]))
               + np.sum(RBGDistribution(3.0, E).logpdf(data[:, 1])))
        assert log_likelihood(theta, data, EE) == pytest.approx(ref, abs=1e-6)

    def test_additive(self, dep_data):
        base = log_likelihood(THETA_DEP, dep_data[:50], EE)
        more = log_likelihood(THETA_DEP, np.vstack([dep_data[:50], dep_data[:1]]), EE)
        single = log_likelihood(THETA_DEP, dep_data[:1], EE)
        assert more - base == pytest.approx(single, abs=1e-9)

    def test_truth_beats_perturbations(self, dep_data, rng):
        top = log_likelihood(THETA_DEP, dep_data, EE)
        wins = 0
        for _ in range(20):
            trial = THETA_DEP.array() + rng.normal(0.0, 0.15, 8)
            try:
                wins += top >= log_likelihood(ThetaVector(trial), dep_data, EE)
            except NonIntegrableError:
                wins += 1
        assert wins >= 19


class TestResiduals:
    def test_match_finite_differences(self, dep_data, rng):
        st = sufficient_stats(dep_data, EE)
        checked = 0
        while checked < 10:
            theta = ThetaVector(THETA_DEP.array() + rng.normal(0.0, 0.05, 8))
            try:
                res = likelihood_residuals(theta, st, EE)
            except NonIntegrableError:
                continue
            grad = finite_diff_gradient(lambda v: log_likelihood(ThetaVector(v), None, EE, stats=st) / st.n,
                                        theta.array(), step=1e-5)
            assert np.max(np.abs(res + grad)) <= 1e-5
            checked += 1

    def test_exponential_family_identity(self):
        # strict m11 = 0: T ~ Gamma(a) so E[u(X)] = digamma(a), and u(X), u(Y) are independent
        a, b = 2.5, 1.7
        theta = ThetaVector.from_m(MMatrix.strict(a, b))
        zero = type(sufficient_stats([[E1, E1]], UU))(np.zeros(8), 1, 0.0, 0.0)
        mean = likelihood_residuals(theta, zero, UU)
        assert mean[0] == pytest.approx(special.digamma(b), abs=1e-6)
        assert mean[2] == pytest.approx(special.digamma(a), abs=1e-6)
        assert mean[3] == pytest.approx(special.digamma(a) * special.digamma(b), abs=1e-6)

    def test_mean_is_gradient_of_log_psi(self):
        zero = type(sufficient_stats([[E1, E1]], UU))(np.zeros(8), 1, 0.0, 0.0)
        mean = likelihood_residuals(THETA_DEP, zero, EE)
        grad = finite_diff_gradient(lambda v: log_psi(ThetaVector(v), EE), THETA_DEP.array(), step=1e-5)
        np.testing.assert_allclose(mean, grad, atol=1e-6)


class TestFisher:
    @pytest.mark.parametrize("theta", TEST_MATRIX)
    def test_symmetric_psd(self, theta):
        info = fisher_information(theta, EE)
        assert np.max(np.abs(info - info.T)) <= 1e-10
        assert np.linalg.eigvalsh(info).min() >= -1e-8

    def test_hessian_of_log_psi(self):
        zero = type(sufficient_stats([[E1, E1]], UU))(np.zeros(8), 1, 0.0, 0.0)
        info = fisher_information(THETA_DEP, EE)
        h = 1e-4
        for j in range(8):
            e = np.zeros(8)
            e[j] = h
            up = likelihood_residuals(ThetaVector(THETA_DEP.array() + e), zero, EE)
            down = likelihood_residuals(ThetaVector(THETA_DEP.array() - e), zero, EE)
            np.testing.assert_allclose((up - down) / (2 * h), info[:, j], atol=1e-5)

    def test_matches_monte_carlo(self):
        draws = gibbs_sample(BivariateRBG(E, E, THETA_IND.to_m()), 100_000, seed=17)
        ux, uy = np.log(E.neg_log_cdf(draws[:, 0])), np.log(E.neg_log_cdf(draws[:, 1]))
        vx, vy = -draws[:, 0], -draws[:, 1]
        S = np.column_stack([uy, vy, ux, ux * uy, ux * vy, vx, vx * uy, vx * vy])
        C = S - S.mean(axis=0)
        info = fisher_information(THETA_IND, EE)
        batches = np.array_split(np.arange(S.shape[0]), 50)
        for i in range(8):
            for j in range(i, 8):
                prod = C[:, i] * C[:, j]
                se = np.std([prod[b].mean() for b in batches], ddof=1) / math.sqrt(50)
                assert abs(prod.mean() - info[i, j]) <= 3 * se, (i, j)


class TestFit:
    def test_strict_interaction_init_rejected(self, ind_data):
        with pytest.raises(NonIntegrableError):
            fit_mle(ind_data, EE, init=ThetaVector.from_m(MMatrix.strict(2.0, 2.0, 0.3)), free=(1, 3, 4))

    def test_strict_submodel_recovery_and_agreement(self, ind_data):
        init = ThetaVector((1.5, 1.0, 2.6, 0.0, 0.0, 1.0, 0.0, 0.0))
        grad = fit_mle(ind_data, EE, init=init, method="gradient", free=(1, 3))
        cyc = fit_mle(ind_data, EE, init=init, method="cyclic", free=(1, 3))
        assert grad.converged and cyc.converged
        assert np.max(np.abs(grad.theta_hat.array() - cyc.theta_hat.array())) <= 1e-4
        se = grad.standard_errors
        for j in (0, 2):
            assert abs(grad.theta_hat.values[j] - THETA_IND.values[j]) <= 3 * se[j]
        # with m11 = 0 the joint factorizes, so the MLE is the pair of univariate fits
        from rbg.univariate import fit_univariate_a
        assert grad.theta_hat.values[2] == pytest.approx(fit_univariate_a(ind_data[:, 0], E), abs=1e-6)
        assert grad.theta_hat.values[0] == pytest.approx(fit_univariate_a(ind_data[:, 1], E), abs=1e-6)
        assert np.isnan(grad.covariance[1, 1])

    def test_independence_interactions_near_zero(self, ind_data):
        res = fit_mle(ind_data, EE, method="gradient")
        se = res.standard_errors
        for j in (3, 4, 6, 7):
            assert abs(res.theta_hat.values[j]) <= 3 * se[j]

    def test_dependent_fit(self, dep_data):
        res = fit_mle(dep_data, EE)
        assert res.converged
        st = sufficient_stats(dep_data, EE)
        assert np.max(np.abs(likelihood_residuals(res.theta_hat, st, EE))) <= 1e-6
        z = (res.theta_hat.array() - THETA_DEP.array()) / res.standard_errors
        assert np.all(np.abs(z) <= 3)
        cov = res.covariance
        np.testing.assert_allclose(cov, cov.T, atol=1e-14)

    def test_deterministic(self, dep_data):
        a = fit_mle(dep_data, EE)
        b = fit_mle(dep_data, EE)
        assert a.theta_hat == b.theta_hat and a.loglik == b.loglik

    def test_iteration_cap_returns_result(self, dep_data):
        res = fit_mle(dep_data, EE, max_iter=1)
        assert not res.converged and res.iterations == 1

    def test_singular_information_flagged(self, rng):
        data = rng.uniform(0.05, 0.95, (200, 2))
        res = fit_mle(data, UU, init=ThetaVector.from_m(MMatrix.strict(1.0, 1.0)), free=(1, 2, 3))
        assert res.covariance is None and res.standard_errors is None

    def test_sweep_order_default(self):
        assert DEFAULT_SWEEP == (8, 1, 2, 3, 4, 5, 6, 7)

    def test_bad_arguments(self, dep_data):
        with pytest.raises(DomainError):
            fit_mle(dep_data, EE, method="newton")
        with pytest.raises(DomainError):
            fit_mle(dep_data, EE, free=(0, 9))

    def test_to_dict(self, dep_data):
        d = fit_mle(dep_data, EE).to_dict()
        assert set(d["theta_hat"]) == {f"theta{k}" for k in range(1, 9)}
        assert len(d["covariance"]) == 8
