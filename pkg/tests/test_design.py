"""Stacked-system assembly: design matrix, blocks, projections, rank checks."""

import numpy as np
import pytest

from slopesynth import (
    AssemblyError,
    FullCovariance,
    InputError,
    ModeratorSpec,
    PredictorCatalog,
    StandardErrors,
    StudyRegression,
    SynthesisMode,
    block_diagonal,
    build_system,
    gls_estimate,
)
from conftest import random_full_studies, random_spd

# the two-study moderator example: study 1 fits intercept+x1+x2+x3, study 2
# omits x2, and the moderator shifts the x1 slope when x2 is present
EXPECTED_W_7x5 = np.array([
    [1, 0, 0, 0, 0],
    [0, 1, 0, 0, 1],
    [0, 0, 1, 0, 0],
    [0, 0, 0, 1, 0],
    [1, 0, 0, 0, 0],
    [0, 1, 0, 0, 0],
    [0, 0, 0, 1, 0],
], dtype=float)


def moderator_example_inputs():
    catalog = PredictorCatalog(("intercept", "x1", "x2", "x3"))
    study1 = StudyRegression(
        id="study1", n=50,
        coefficients={"intercept": 1.0, "x1": 0.9, "x2": 0.4, "x3": 0.2},
        cov_spec=FullCovariance(np.eye(4)),
    )
    study2 = StudyRegression(
        id="study2", n=40,
        coefficients={"intercept": 1.0, "x1": 0.5, "x3": 0.2},
        cov_spec=FullCovariance(np.eye(3)),
    )
    moderator = ModeratorSpec(
        name="gamma1", target="x1",
        applies_when=lambda s: "x2" in s.coefficients,
    )
    return catalog, [study1, study2], moderator


class TestBlockDiagonal:
    def test_scalar_blocks(self):
        out = block_diagonal([np.array([[2.0]]), np.array([[3.0]])])
        assert np.array_equal(out, np.diag([2.0, 3.0]))

    def test_single_block_unchanged(self):
        block = np.array([[1.0, 0.2], [0.2, 2.0]])
        assert np.array_equal(block_diagonal([block]), block)

    def test_off_blocks_exactly_zero(self):
        rng = np.random.default_rng(0)
        b1, b2 = random_spd(rng, 2), random_spd(rng, 3)
        out = block_diagonal([b1, b2])
        assert out.shape == (5, 5)
        assert np.array_equal(out[:2, :2], b1)
        assert np.array_equal(out[2:, 2:], b2)
        assert np.all(out[:2, 2:] == 0.0)
        assert np.all(out[2:, :2] == 0.0)

    def test_rejects_rectangles(self):
        with pytest.raises(InputError):
            block_diagonal([np.ones((2, 3))])


class TestBuildSystem:
    def test_moderator_example_matches_printed_design(self):
        catalog, studies, moderator = moderator_example_inputs()
        system = build_system(studies, catalog, moderators=[moderator])
        assert np.array_equal(system.w, EXPECTED_W_7x5)
        assert system.param_labels == ("intercept", "x1", "x2", "x3", "gamma1")
        assert system.w[1, 4] == 1.0
        assert np.sum(system.w[:, 4]) == 1.0  # only row 2 carries the moderator
        assert system.row_index[1] == ("study1", "x1")
        assert system.b.tolist() == [1.0, 0.9, 0.4, 0.2, 1.0, 0.5, 0.2]

    def test_full_models_make_identity_stack(self):
        rng = np.random.default_rng(1)
        catalog = PredictorCatalog(("intercept", "a", "b"))
        studies = random_full_studies(rng, 4, catalog.names)
        system = build_system(studies, catalog)
        assert np.array_equal(system.w, np.vstack([np.eye(3)] * 4))
        assert system.full_model

    def test_single_full_study(self):
        rng = np.random.default_rng(2)
        catalog = PredictorCatalog(("intercept", "a"))
        (study,) = random_full_studies(rng, 1, catalog.names)
        system = build_system([study], catalog)
        assert np.array_equal(system.w, np.eye(2))
        assert np.array_equal(system.blocks[0], study.cov_spec.matrix)

    def test_row_and_column_counts(self):
        catalog, studies, moderator = moderator_example_inputs()
        system = build_system(studies, catalog, moderators=[moderator])
        assert system.n_rows == len(system.b) == 7
        assert system.n_params == len(catalog) + 1

    def test_empty_studies_rejected(self):
        catalog = PredictorCatalog(("intercept", "a"))
        with pytest.raises(InputError, match="at least one study"):
            build_system([], catalog)

    def test_unidentified_parameter_listed(self):
        catalog = PredictorCatalog(("intercept", "a", "never_reported"))
        study = StudyRegression(
            id="s", n=20, coefficients={"intercept": 1.0, "a": 0.1},
            cov_spec=StandardErrors([0.3, 0.1]),
        )
        with pytest.raises(AssemblyError, match="never_reported"):
            build_system([study], catalog)

    def test_wls_mode_zeroes_off_diagonals(self, school_studies, school_catalog):
        system = build_system(school_studies, school_catalog, mode=SynthesisMode.WLS_DIAGONAL)
        for block, study in zip(system.blocks, school_studies):
            full = np.asarray(study.cov_spec.matrix)
            assert np.array_equal(block, np.diag(np.diag(full)))

    def test_pooled_mode_recovers_xtx_inverse(self, school_studies, school_catalog):
        system = build_system(school_studies, school_catalog, mode=SynthesisMode.POOLED_MSE)
        first = np.asarray(school_studies[0].cov_spec.matrix) / school_studies[0].mse
        assert np.allclose(system.blocks[0], first, rtol=1e-14)

    def test_pooled_mode_requires_mse(self, school_catalog):
        study = StudyRegression(
            id="no_mse", n=30,
            coefficients={"intercept": 1.0, "math": 0.1, "reading": 0.2},
            cov_spec=FullCovariance(np.eye(3)),
        )
        with pytest.raises(InputError, match="no_mse"):
            build_system([study], school_catalog, mode=SynthesisMode.POOLED_MSE)

    def test_pooled_mode_warns_on_heterogeneous_models(self, school_catalog):
        common = dict(cov_spec=FullCovariance(np.eye(2)), mse=2.0)
        s1 = StudyRegression(id="a", n=20,
                             coefficients={"intercept": 1.0, "math": 0.1}, **common)
        s2 = StudyRegression(id="b", n=20,
                             coefficients={"intercept": 1.0, "reading": 0.3}, **common)
        system = build_system([s1, s2], school_catalog, mode=SynthesisMode.POOLED_MSE)
        assert any("different models" in w for w in system.warnings)

    def test_moderator_name_collisions_rejected(self):
        catalog, studies, _ = moderator_example_inputs()
        clash = ModeratorSpec(name="x1", target="x1", applies_when=lambda s: True)
        with pytest.raises(InputError, match="collide"):
            build_system(studies, catalog, moderators=[clash])

    def test_duplicate_study_ids_rejected(self):
        rng = np.random.default_rng(3)
        catalog = PredictorCatalog(("intercept", "a"))
        studies = random_full_studies(rng, 2, catalog.names)
        twin = [studies[0], studies[0]]
        with pytest.raises(InputError, match="duplicate study ids"):
            build_system(twin, catalog)


class TestProjection:
    def test_slopes_only_drops_intercept_rows_and_column(self):
        catalog, studies, moderator = moderator_example_inputs()
        full = build_system(studies, catalog, moderators=[moderator])
        projected = full.project_slopes_only()
        keep_rows = [1, 2, 3, 5, 6]
        keep_cols = [1, 2, 3, 4]
        assert np.array_equal(projected.w, full.w[np.ix_(keep_rows, keep_cols)])
        assert np.array_equal(projected.b, full.b[keep_rows])
        assert projected.param_labels == ("x1", "x2", "x3", "gamma1")
        assert projected.slopes_only
        # block marginals, not re-resolved
        assert np.array_equal(projected.blocks[0], full.blocks[0][np.ix_([1, 2, 3], [1, 2, 3])])

    def test_build_with_flag_matches_projection(self, school_studies, school_catalog):
        full = build_system(school_studies, school_catalog)
        direct = build_system(school_studies, school_catalog, slopes_only=True)
        projected = full.project_slopes_only()
        assert np.array_equal(direct.w, projected.w)
        assert np.array_equal(direct.b, projected.b)
        for a, b in zip(direct.blocks, projected.blocks):
            assert np.array_equal(a, b)

    def test_projection_without_intercepts_is_noop(self):
        catalog = PredictorCatalog(("slope",), has_intercept=False)
        study = StudyRegression(id="s", n=10, coefficients={"slope": 1.0},
                                cov_spec=StandardErrors([0.1]))
        system = build_system([study], catalog, slopes_only=True)
        assert system.slopes_only
        assert system.n_rows == 1

    def test_intercept_only_study_drops_out(self, school_catalog):
        full_cov = FullCovariance(np.eye(3))
        s1 = StudyRegression(
            id="full", n=30,
            coefficients={"intercept": 1.0, "math": 0.1, "reading": 0.2},
            cov_spec=full_cov,
        )
        s2 = StudyRegression(
            id="icept", n=10, coefficients={"intercept": 2.0},
            cov_spec=FullCovariance(np.eye(1)),
        )
        system = build_system([s1, s2], school_catalog)
        projected = system.project_slopes_only()
        assert projected.study_ids == ("full",)
        assert projected.k == 1


class TestDiagnostics:
    def test_condition_number_matches_normal_matrix(self, school_studies, school_catalog):
        system = build_system(school_studies, school_catalog)
        m, _ = system.normal_equations()
        eigs = np.linalg.eigvalsh(m)
        assert system.condition_number() == pytest.approx(eigs[-1] / eigs[0], rel=1e-8)

    def test_moderator_free_identity_stack_recovered(self):
        catalog, studies, moderator = moderator_example_inputs()
        with_mod = build_system(studies, catalog, moderators=[moderator])
        without = build_system(studies, catalog)
        assert np.array_equal(without.w, with_mod.w[:, :4])


class TestPermutationInvariance:
    def test_estimates_ignore_study_order(self, school_studies, school_catalog):
        forward = gls_estimate(build_system(school_studies, school_catalog))
        backward = gls_estimate(build_system(school_studies[::-1], school_catalog))
        assert np.allclose(forward.beta_hat, backward.beta_hat, rtol=1e-12, atol=1e-14)
        assert np.allclose(forward.cov_beta, backward.cov_beta, rtol=1e-12, atol=1e-14)
