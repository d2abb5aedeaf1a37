"""slopesynth: fixed-effects synthesis of regression slopes across studies.

Point estimates come in three flavors -- full generalized least squares on
stacked coefficient vectors, diagonal (inverse-variance) weighting, and a
pooled-error special case that reproduces what a single regression on all
the raw data would give.  The package also ships the matching homogeneity
and significance tests, a study-file format with a CLI, and a raw-data
oracle that verifies the pooled-sample equivalence property by simulation.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .design import (
    ModeratorSpec,
    StackedSystem,
    SynthesisMode,
    block_diagonal,
    build_system,
)
from .estimators import (
    SynthesisResult,
    gls_estimate,
    pooled_gls_estimate,
    pooled_mse,
    wls_univariate,
)
from .exceptions import AssemblyError, InputError, SingularityError, SlopeSynthError
from .inference import (
    TestKind,
    TestResult,
    cochran_c,
    confidence_interval,
    f_max,
    q_b,
    q_e,
    z_test,
)
from .special import chi_sq_sf, normal_quantile, normal_sf
from .studies import (
    DEFAULT_COMMON_CORR,
    INTERCEPT,
    CovSpec,
    FullCovariance,
    PredictorCatalog,
    Provenance,
    SlopeCovariance,
    StandardErrors,
    StandardErrorsWithCommonCorr,
    StudyRegression,
    ValidationReport,
    XtXInverseWithMse,
    bivariate_slope,
    recover_xtx_inverse,
    resolve_covariance,
    t_to_d,
    validate_collection,
    validate_study,
)

__version__ = "0.1.0"

__all__ = [
    "AssemblyError",
    "CovSpec",
    "DEFAULT_COMMON_CORR",
    "FullCovariance",
    "INTERCEPT",
    "InputError",
    "KERNEL_BACKEND",
    "ModeratorSpec",
    "PredictorCatalog",
    "Provenance",
    "SingularityError",
    "SlopeCovariance",
    "SlopeSynthError",
    "StackedSystem",
    "StandardErrors",
    "StandardErrorsWithCommonCorr",
    "StudyRegression",
    "SynthesisMode",
    "SynthesisResult",
    "TestKind",
    "TestResult",
    "ValidationReport",
    "XtXInverseWithMse",
    "bivariate_slope",
    "block_diagonal",
    "build_system",
    "chi_sq_sf",
    "cochran_c",
    "confidence_interval",
    "f_max",
    "gls_estimate",
    "normal_quantile",
    "normal_sf",
    "pooled_gls_estimate",
    "pooled_mse",
    "q_b",
    "q_e",
    "recover_xtx_inverse",
    "resolve_covariance",
    "t_to_d",
    "validate_collection",
    "validate_study",
    "wls_univariate",
    "z_test",
]
