"""Raw-data oracle: fits, equivalence, generation, Levene, MC references."""

import numpy as np
import pytest

from slopesynth import (
    InputError,
    PredictorCatalog,
    SingularityError,
    SynthesisMode,
    build_system,
    gls_estimate,
)
from slopesynth.oracle import (
    RawDataset,
    SimConfig,
    generate,
    levene_from_dataset,
    levene_test,
    ols_fit,
    paper_shape,
    run_variance_probe,
    split_and_fit,
    study_residuals,
    variance_check_mc_p,
    verify_equivalence,
)


def two_study_dataset(rng, n=40, noise=1.0, k=2):
    catalog = PredictorCatalog(("intercept", "x1", "x2"))
    total = n * k
    x = np.column_stack([np.ones(total), rng.normal(size=(total, 2))])
    beta = np.array([1.0, 0.5, -0.25])
    y = x @ beta + noise * rng.standard_normal(total)
    labels = np.repeat([f"g{i}" for i in range(k)], n)
    return RawDataset(x=x, y=y, study_labels=np.array(labels, dtype=object),
                      catalog=catalog), beta


class TestOlsFit:
    def test_exact_interpolation(self):
        rng = np.random.default_rng(1)
        x = np.column_stack([np.ones(30), rng.normal(size=(30, 2))])
        beta = np.array([2.0, -1.0, 0.5])
        fit = ols_fit(x, x @ beta)
        assert np.allclose(fit.coef, beta, atol=1e-10)
        assert fit.mse == pytest.approx(0.0, abs=1e-18)

    def test_intercept_only_model(self):
        rng = np.random.default_rng(2)
        y = rng.normal(size=50)
        fit = ols_fit(np.ones((50, 1)), y)
        assert fit.coef[0] == pytest.approx(y.mean(), rel=1e-12)
        assert fit.mse == pytest.approx(y.var(ddof=1), rel=1e-12)
        assert fit.dfe == 49

    def test_matches_independent_normal_equations(self):
        # the dual-route check: an lstsq (QR) solve against the kernel route
        rng = np.random.default_rng(3)
        x = np.column_stack([np.ones(50), rng.normal(size=(50, 2))])
        y = rng.normal(size=50)
        fit = ols_fit(x, y)
        ref, rss_ref, *_ = np.linalg.lstsq(x, y, rcond=None)
        assert np.allclose(fit.coef, ref, rtol=1e-10, atol=1e-13)
        assert fit.rss == pytest.approx(float(rss_ref[0]), rel=1e-10)
        assert np.allclose(fit.cov, np.linalg.inv(x.T @ x) * fit.mse, rtol=1e-9)

    def test_rank_deficiency_raises(self):
        x = np.ones((20, 2))
        with pytest.raises(SingularityError):
            ols_fit(x, np.arange(20.0))


class TestSplitAndFit:
    def test_noise_free_split_recovers_truth(self):
        rng = np.random.default_rng(4)
        data, beta = two_study_dataset(rng, noise=0.0)
        studies = split_and_fit(data)
        for study in studies:
            assert np.allclose(study.values, beta, atol=1e-10)
            assert study.mse is None  # exact fit carries no error scale

    def test_thirteen_school_shape(self):
        data = generate(paper_shape(seed=11))
        studies = split_and_fit(data)
        assert len(studies) == 13
        assert all(len(s.coefficients) == 3 for s in studies)
        assert all(s.mse is not None and s.mse > 0 for s in studies)
        # results feed straight into assembly
        system = build_system(studies, data.catalog)
        assert system.k == 13

    def test_reduced_model_omits_label(self):
        rng = np.random.default_rng(5)
        data, _ = two_study_dataset(rng)
        studies = split_and_fit(data, models={"g1": ("intercept", "x1")})
        assert studies[0].labels == ("intercept", "x1", "x2")
        assert studies[1].labels == ("intercept", "x1")

    def test_self_consistency_with_per_study_ols(self):
        rng = np.random.default_rng(6)
        data, _ = two_study_dataset(rng)
        studies = split_and_fit(data)
        for sid, study in zip(data.study_ids, studies):
            rows = data.rows_of(sid)
            fit = ols_fit(data.x[rows], data.y[rows])
            assert np.array_equal(study.values, fit.coef)
            assert study.mse == fit.mse

    def test_rank_deficient_study_named(self):
        catalog = PredictorCatalog(("intercept", "x1"))
        x = np.column_stack([np.ones(12), np.zeros(12)])
        y = np.arange(12.0)
        labels = np.array(["a"] * 6 + ["b"] * 6, dtype=object)
        data = RawDataset(x=x, y=y, study_labels=labels, catalog=catalog)
        with pytest.raises(SingularityError, match="study 'a'"):
            split_and_fit(data)


class TestVerifyEquivalence:
    def test_simulated_dataset_passes(self):
        report = verify_equivalence(generate(paper_shape(seed=21)))
        assert report.passed
        assert report.max_rel_coef_discrepancy < 1e-10
        assert report.max_rel_cov_discrepancy < 1e-10

    def test_single_study_is_trivial_with_unit_ratio(self):
        rng = np.random.default_rng(8)
        data, _ = two_study_dataset(rng, k=1)
        report = verify_equivalence(data)
        assert report.passed
        assert report.scale_ratio == pytest.approx(1.0, rel=1e-12)
        assert report.k == 1

    def test_gls_with_known_common_sigma_matches_pooled_ols(self):
        # equal error variances: full-covariance weighting agrees with the
        # pooled fit as well
        config = paper_shape(seed=31)
        data = generate(config)
        studies = split_and_fit(data)
        sigma = 12.83  # the true common variance used by the generator
        known = []
        for study in studies:
            rows = data.rows_of(study.id)
            xs = data.x[rows]
            from slopesynth import FullCovariance, StudyRegression
            known.append(StudyRegression(
                id=study.id, n=study.n, coefficients=study.coefficients,
                cov_spec=FullCovariance(np.linalg.inv(xs.T @ xs) * sigma),
                mse=study.mse, dfe=study.dfe))
        result = gls_estimate(build_system(known, data.catalog))
        full = ols_fit(data.x, data.y)
        scale = np.maximum(np.abs(result.beta_hat), np.abs(full.coef))
        assert np.max(np.abs(result.beta_hat - full.coef) / scale) < 1e-10


class TestGenerate:
    def test_same_seed_identical(self):
        config = paper_shape(seed=99)
        d1, d2 = generate(config), generate(config)
        assert np.array_equal(d1.x, d2.x)
        assert np.array_equal(d1.y, d2.y)

    def test_different_replications_differ(self):
        config = paper_shape(seed=99)
        assert not np.array_equal(generate(config, 0).x, generate(config, 1).x)

    def test_noise_free_is_exactly_linear(self):
        config = SimConfig(
            n_per_study=(30, 25), beta=(1.0, 0.4, -0.2),
            predictor_corr=np.array([[1.0, 0.3], [0.3, 1.0]]),
            sigma_sq=0.0, seed=13,
        )
        data = generate(config)
        fit = ols_fit(data.x, data.y)
        assert np.allclose(fit.coef, config.beta, atol=1e-12)
        assert fit.mse == pytest.approx(0.0, abs=1e-20)

    def test_empirical_correlation_near_target(self):
        config = SimConfig(
            n_per_study=(4000,), beta=(0.0, 1.0, 1.0),
            predictor_corr=np.array([[1.0, 0.7], [0.7, 1.0]]),
            sigma_sq=1.0, seed=5,
        )
        data = generate(config)
        observed = np.corrcoef(data.x[:, 1], data.x[:, 2])[0, 1]
        assert observed == pytest.approx(0.7, abs=0.05)

    def test_coefficients_recovered_within_three_standard_errors(self):
        config = SimConfig(
            n_per_study=(60,), beta=(1.0, 0.5),
            predictor_corr=np.array([[1.0]]), sigma_sq=2.0, seed=17,
        )
        inside = 0
        reps = 1000
        for r in range(reps):
            data = generate(config, replication=r)
            fit = ols_fit(data.x, data.y)
            se = np.sqrt(np.diag(fit.cov))
            inside += bool(np.all(np.abs(fit.coef - config.beta) <= 3 * se))
        assert inside / reps >= 0.99

    def test_invalid_correlation_rejected(self):
        with pytest.raises(InputError):
            SimConfig(n_per_study=(30,), beta=(0.0, 1.0, 1.0),
                      predictor_corr=np.array([[1.0, 2.0], [2.0, 1.0]]),
                      sigma_sq=1.0)


class TestLevene:
    def test_null_behavior(self):
        rng = np.random.default_rng(19)
        groups = [rng.normal(size=200) for _ in range(5)]
        res = levene_test(groups)
        assert res.statistic == pytest.approx(1.0, abs=1.5)
        assert res.p_value > 0.01
        assert (res.df, res.df2) == (4, 995)

    def test_degenerate_deviations_give_zero(self):
        res = levene_test([np.array([1.0, 1.0, 1.0]), np.array([5.0, 5.0, 5.0])])
        assert res.statistic == 0.0
        assert res.p_value == 1.0

    def test_power_against_ninefold_variance(self):
        rng = np.random.default_rng(23)
        rejections = 0
        reps = 200
        for _ in range(reps):
            g1 = rng.normal(size=100)
            g2 = 3.0 * rng.normal(size=100)  # variance ratio 9
            if levene_test([g1, g2]).p_value < 0.05:
                rejections += 1
        assert rejections / reps >= 0.95

    def test_group_size_guard(self):
        with pytest.raises(InputError):
            levene_test([np.array([1.0]), np.array([1.0, 2.0])])

    def test_from_dataset_matches_group_route(self):
        data = generate(paper_shape(seed=29))
        via_dataset = levene_from_dataset(data)
        via_groups = levene_test(study_residuals(data))
        assert via_dataset.statistic == via_groups.statistic


class TestVarianceCheckMcP:
    def test_null_statistic_has_large_p(self):
        # C at its null expectation should not look extreme
        p = variance_check_mc_p([40] * 5, observed=1 / 5 + 0.02, kind="cochran_c",
                                reps=2000, seed=3)
        assert p > 0.2

    def test_extreme_statistic_has_small_p(self):
        p = variance_check_mc_p([40] * 5, observed=5.0, kind="f_max", reps=500, seed=3)
        assert p < 0.05

    def test_bad_kind_rejected(self):
        with pytest.raises(InputError):
            variance_check_mc_p([10, 10], 0.5, kind="bartlett")


class TestVarianceProbeSmall:
    def test_report_fields_are_finite(self):
        report = run_variance_probe(paper_shape(seed=41, equal_variance=False), reps=200)
        for lab in report.labels:
            assert np.isfinite(report.ratio[lab])
            assert report.mc_se[lab] > 0.0
            assert report.model_variance[lab] > 0.0
            assert report.empirical_variance[lab] > 0.0
        payload = report.to_dict()
        assert payload["study"] == "variance"
        assert {"label", "ratio", "mc_se"} <= set(payload["params"][0])
