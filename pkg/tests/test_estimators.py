"""Estimator contracts: GLS, the univariate pool, and the pooled-MSE route."""

import numpy as np
import pytest

from slopesynth import (
    FullCovariance,
    InputError,
    PredictorCatalog,
    StudyRegression,
    SynthesisMode,
    build_system,
    gls_estimate,
    pooled_gls_estimate,
    pooled_mse,
    wls_univariate,
)
from conftest import TABLE1, random_full_studies


class TestWlsUnivariate:
    def test_hand_computed_pool(self):
        b, v = wls_univariate([0.2, 0.4], [0.01, 0.04])
        assert b == pytest.approx(0.24, rel=1e-14)
        assert v == pytest.approx(0.008, rel=1e-14)

    def test_equal_variances_give_plain_mean(self):
        slopes = [0.1, 0.5, 0.9, 0.3]
        b, v = wls_univariate(slopes, [0.25] * 4)
        assert b == pytest.approx(np.mean(slopes), rel=1e-15)
        assert v == pytest.approx(0.25 / 4, rel=1e-15)

    def test_single_slope_passes_through(self):
        b, v = wls_univariate([0.7], [0.09])
        assert (b, v) == (0.7, 0.09)

    def test_domain_errors(self):
        with pytest.raises(InputError):
            wls_univariate([0.1, 0.2], [0.5, 0.0])
        with pytest.raises(InputError):
            wls_univariate([], [])
        with pytest.raises(InputError):
            wls_univariate([0.1], [0.1, 0.2])


class TestGlsEstimate:
    def test_single_study_reproduces_its_input(self):
        rng = np.random.default_rng(7)
        catalog = PredictorCatalog(("intercept", "a", "b"))
        (study,) = random_full_studies(rng, 1, catalog.names)
        result = gls_estimate(build_system([study], catalog))
        assert np.allclose(result.beta_hat, study.values, rtol=1e-12)
        assert np.allclose(result.cov_beta, study.cov_spec.matrix, rtol=1e-12)

    def test_two_identical_studies_halve_the_covariance(self):
        catalog = PredictorCatalog(("intercept", "a"))
        cov = np.array([[0.5, 0.1], [0.1, 0.2]])
        coeffs = {"intercept": 1.5, "a": -0.3}
        studies = [
            StudyRegression(id=f"s{i}", n=20, coefficients=dict(coeffs),
                            cov_spec=FullCovariance(cov))
            for i in range(2)
        ]
        result = gls_estimate(build_system(studies, catalog))
        assert np.allclose(result.beta_hat, [1.5, -0.3], rtol=1e-12)
        assert np.allclose(result.cov_beta, cov / 2.0, rtol=1e-12)

    def test_diagonal_system_reduces_to_univariate_pool(self):
        rng = np.random.default_rng(11)
        catalog = PredictorCatalog(("intercept", "a", "b"))
        k, dim = 6, 3
        studies = []
        for i in range(k):
            variances = rng.uniform(0.01, 2.0, size=dim)
            coeffs = {lab: float(v)
                      for lab, v in zip(catalog.names, rng.uniform(0.5, 1.5, size=dim))}
            studies.append(StudyRegression(
                id=f"s{i}", n=30, coefficients=coeffs,
                cov_spec=FullCovariance(np.diag(variances))))
        result = gls_estimate(build_system(studies, catalog))
        for j, lab in enumerate(catalog.names):
            slopes = [s.coefficients[lab] for s in studies]
            variances = [s.cov_spec.matrix[j, j] for s in studies]
            b, v = wls_univariate(slopes, variances)
            assert result.beta_hat[j] == pytest.approx(b, rel=1e-14)
            assert result.cov_beta[j, j] == pytest.approx(v, rel=1e-14)

    def test_information_never_decreases(self):
        rng = np.random.default_rng(13)
        catalog = PredictorCatalog(("intercept", "a", "b"))
        studies = random_full_studies(rng, 5, catalog.names)
        result = gls_estimate(build_system(studies, catalog))
        pooled_diag = np.diag(result.cov_beta)
        for study in studies:
            assert np.all(pooled_diag <= np.diag(study.cov_spec.matrix) + 1e-12)

    def test_residuals_are_stacked_b_minus_fit(self, school_studies, school_catalog):
        system = build_system(school_studies, school_catalog)
        result = gls_estimate(system)
        assert np.allclose(result.residuals, system.b - system.w @ result.beta_hat)

    def test_scale_equivariance(self):
        rng = np.random.default_rng(17)
        catalog = PredictorCatalog(("intercept", "a", "b"))
        studies = random_full_studies(rng, 4, catalog.names)
        base = gls_estimate(build_system(studies, catalog))

        c, target = 3.7, 1  # rescale the "a" coefficient in every study
        rescaled = []
        for study in studies:
            coeffs = dict(study.coefficients)
            coeffs["a"] = coeffs["a"] * c
            cov = np.asarray(study.cov_spec.matrix).copy()
            cov[target, :] *= c
            cov[:, target] *= c
            rescaled.append(StudyRegression(
                id=study.id, n=study.n, coefficients=coeffs,
                cov_spec=FullCovariance(cov), mse=study.mse))
        result = gls_estimate(build_system(rescaled, catalog))
        expect = base.beta_hat.copy()
        expect[target] *= c
        assert np.allclose(result.beta_hat, expect, rtol=1e-10)
        assert result.cov_beta[target, target] == pytest.approx(
            base.cov_beta[target, target] * c * c, rel=1e-10)

    def test_pooled_system_rejected(self, school_studies, school_catalog):
        system = build_system(school_studies, school_catalog, mode=SynthesisMode.POOLED_MSE)
        with pytest.raises(InputError):
            gls_estimate(system)


class TestPooledMse:
    def test_thirteen_school_pool(self):
        dfes = [n - 3 for n, _ in TABLE1]
        mses = [m for _, m in TABLE1]
        assert pooled_mse(dfes, mses) == pytest.approx(12.83, abs=0.02)

    def test_constant_input_is_identity(self):
        assert pooled_mse([3, 9, 1], [4.4, 4.4, 4.4]) == pytest.approx(4.4, rel=1e-15)

    def test_hand_weighted_mean(self):
        assert pooled_mse([1, 3], [4.0, 8.0]) == pytest.approx(7.0, rel=1e-15)

    def test_domain_errors(self):
        with pytest.raises(InputError):
            pooled_mse([1, 2], [1.0])
        with pytest.raises(InputError):
            pooled_mse([0, 2], [1.0, 1.0])
        with pytest.raises(InputError):
            pooled_mse([1, 2], [1.0, 0.0])


class TestPooledGls:
    def test_covariance_is_normal_inverse_times_pooled_mse(
        self, school_studies, school_catalog
    ):
        system = build_system(school_studies, school_catalog, mode=SynthesisMode.POOLED_MSE)
        s_star = pooled_mse([s.dfe for s in school_studies],
                            [s.mse for s in school_studies])
        result = pooled_gls_estimate(system, s_star)
        m, _ = system.normal_equations()
        assert np.allclose(result.cov_beta, np.linalg.inv(m) * s_star, rtol=1e-10)
        assert result.pooled_mse == pytest.approx(s_star)

    def test_requires_pooled_mode_and_positive_scale(self, school_studies, school_catalog):
        gls_system = build_system(school_studies, school_catalog)
        with pytest.raises(InputError):
            pooled_gls_estimate(gls_system, 12.8)
        pooled_system = build_system(school_studies, school_catalog,
                                     mode=SynthesisMode.POOLED_MSE)
        with pytest.raises(InputError):
            pooled_gls_estimate(pooled_system, 0.0)
