"""Study-level regression results and their covariance specifications.

A synthesis starts from what each study *reports*: a vector of fitted
coefficients, a sample size, usually a residual mean square, and -- in the
lucky case -- the covariance matrix of the coefficients.  This module holds
those reported quantities, validates them against a shared predictor
catalog, and resolves whatever covariance information is available into a
full symmetric positive-definite matrix that the estimators can weight by.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from ._linalg import SYM_RTOL, as_matrix, is_symmetric
from .exceptions import InputError, SingularityError

#: common slope correlation used when filling missing off-diagonals and no
#: other value is given (user-overridable everywhere it is accepted)
DEFAULT_COMMON_CORR = 0.2

#: conventional label for the intercept column
INTERCEPT = "intercept"


@dataclass(frozen=True)
class PredictorCatalog:
    """Ordered universe of coefficient labels shared by all studies.

    ``names`` lists every coefficient the synthesis can estimate, with the
    intercept (when modeled) at position 0.  Individual studies may report
    any subset.
    """

    names: tuple[str, ...]
    has_intercept: bool = True

    def __init__(self, names: Sequence[str], has_intercept: bool = True):
        names = tuple(names)
        if not names:
            raise InputError("catalog requires at least one coefficient label")
        if len(set(names)) != len(names):
            raise InputError(f"catalog labels are not unique: {names}")
        if any(not n for n in names):
            raise InputError("catalog labels must be non-empty strings")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "has_intercept", bool(has_intercept))

    @property
    def p(self) -> int:
        """Number of predictors, excluding the intercept."""
        return len(self.names) - (1 if self.has_intercept else 0)

    @property
    def intercept_label(self) -> Optional[str]:
        return self.names[0] if self.has_intercept else None

    def index(self, label: str) -> int:
        try:
            return self.names.index(label)
        except ValueError:
            raise InputError(f"label {label!r} not in catalog {self.names}") from None

    def __contains__(self, label: str) -> bool:
        return label in self.names

    def __len__(self) -> int:
        return len(self.names)


# ---------------------------------------------------------------------------
# Covariance specifications: the four shapes studies report
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FullCovariance:
    """The study reported the full covariance matrix of its coefficients."""

    matrix: np.ndarray

    def __init__(self, matrix):
        matrix = as_matrix(matrix, "covariance matrix")
        if not is_symmetric(matrix):
            raise InputError("covariance matrix is not symmetric")
        object.__setattr__(self, "matrix", matrix)

    def __len__(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class StandardErrors:
    """Only per-coefficient standard errors are available."""

    se: np.ndarray

    def __init__(self, se):
        se = np.atleast_1d(np.asarray(se, dtype=float))
        if se.ndim != 1:
            raise InputError("standard errors must be a flat vector")
        if not np.all(se > 0.0):
            raise InputError(f"standard errors must be positive, got {se}")
        object.__setattr__(self, "se", se)

    def __len__(self) -> int:
        return self.se.shape[0]


@dataclass(frozen=True, eq=False)
class StandardErrorsWithCommonCorr:
    """Standard errors plus an assumed common correlation between slopes."""

    se: np.ndarray
    rho: float

    def __init__(self, se, rho: float):
        se = np.atleast_1d(np.asarray(se, dtype=float))
        if not np.all(se > 0.0):
            raise InputError(f"standard errors must be positive, got {se}")
        rho = float(rho)
        if not -1.0 < rho < 1.0:
            raise InputError(f"common correlation must lie in (-1, 1), got {rho}")
        object.__setattr__(self, "se", se)
        object.__setattr__(self, "rho", rho)

    def __len__(self) -> int:
        return self.se.shape[0]


@dataclass(frozen=True, eq=False)
class XtXInverseWithMse:
    """The study reported its inverse cross-product matrix and residual MSE."""

    matrix: np.ndarray
    mse: float

    def __init__(self, matrix, mse: float):
        matrix = as_matrix(matrix, "inverse cross-product matrix")
        if not is_symmetric(matrix):
            raise InputError("inverse cross-product matrix is not symmetric")
        mse = float(mse)
        if mse <= 0.0:
            raise InputError(f"mse must be positive, got {mse}")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "mse", mse)

    def __len__(self) -> int:
        return self.matrix.shape[0]


CovSpec = Union[FullCovariance, StandardErrors, StandardErrorsWithCommonCorr, XtXInverseWithMse]


# ---------------------------------------------------------------------------
# Studies
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StudyRegression:
    """One study's reported regression fit.

    Parameters
    ----------
    id : str
        Study identifier used in diagnostics.
    n : int
        Case count. Must leave at least one error degree of freedom.
    coefficients : mapping label -> value
        Reported coefficients, keyed by catalog label.  Iteration order of
        the mapping fixes the row/column order of any reported covariance.
    cov_spec : CovSpec, optional
        Whatever covariance information the study reported.
    mse : float, optional
        Residual mean square (estimate of the error variance).
    dfe : int, optional
        Error degrees of freedom; defaults to ``n - len(coefficients)``.
    features : mapping str -> bool
        Study-level flags consulted by moderator predicates.
    """

    id: str
    n: int
    coefficients: dict[str, float]
    cov_spec: Optional[CovSpec] = None
    mse: Optional[float] = None
    dfe: Optional[int] = None
    features: dict[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        if not self.id:
            raise InputError("study id must be non-empty")
        if not self.coefficients:
            raise InputError(f"study {self.id!r} reports no coefficients")
        obj_set = object.__setattr__
        obj_set(self, "coefficients", dict(self.coefficients))
        obj_set(self, "features", dict(self.features))
        obj_set(self, "n", int(self.n))
        if self.mse is not None:
            obj_set(self, "mse", float(self.mse))
            if self.mse <= 0.0:
                raise InputError(f"study {self.id!r}: mse must be positive, got {self.mse}")
        if self.dfe is None:
            obj_set(self, "dfe", self.n - len(self.coefficients))
        else:
            obj_set(self, "dfe", int(self.dfe))
        if self.dfe < 1:
            raise InputError(
                f"study {self.id!r}: error degrees of freedom must be >= 1 "
                f"(n = {self.n}, coefficients = {len(self.coefficients)}, dfe = {self.dfe})"
            )

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.coefficients)

    @property
    def values(self) -> np.ndarray:
        return np.array(list(self.coefficients.values()), dtype=float)

    def ordered_by(self, catalog: PredictorCatalog) -> "StudyRegression":
        """Copy of the study with coefficients (and covariance) in catalog order."""
        order = sorted(range(len(self.labels)), key=lambda i: catalog.index(self.labels[i]))
        if order == list(range(len(self.labels))):
            return self
        labels = [self.labels[i] for i in order]
        coeffs = {lab: self.coefficients[lab] for lab in labels}
        spec = self.cov_spec
        if isinstance(spec, FullCovariance):
            spec = FullCovariance(spec.matrix[np.ix_(order, order)])
        elif isinstance(spec, StandardErrors):
            spec = StandardErrors(spec.se[order])
        elif isinstance(spec, StandardErrorsWithCommonCorr):
            spec = StandardErrorsWithCommonCorr(spec.se[order], spec.rho)
        elif isinstance(spec, XtXInverseWithMse):
            spec = XtXInverseWithMse(spec.matrix[np.ix_(order, order)], spec.mse)
        return StudyRegression(
            id=self.id, n=self.n, coefficients=coeffs, cov_spec=spec,
            mse=self.mse, dfe=self.dfe, features=self.features,
        )


class Provenance(enum.Enum):
    """How a resolved slope covariance was obtained."""

    REPORTED = "reported"
    DIAGONAL_ONLY = "diagonal-only"
    CORR_FILLED = "correlation-filled"
    RECOVERED = "recovered"


@dataclass(frozen=True, eq=False)
class SlopeCovariance:
    """A resolved, symmetric positive-definite coefficient covariance.

    Construction enforces symmetry (relative tolerance 1e-10) and
    positive-definiteness: the smallest eigenvalue must exceed
    ``-1e-10 *`` the largest.
    """

    matrix: np.ndarray
    provenance: Provenance
    rho: Optional[float] = None

    def __post_init__(self):
        matrix = as_matrix(self.matrix, "slope covariance")
        if not is_symmetric(matrix, SYM_RTOL):
            raise SingularityError("slope covariance is not symmetric")
        eigvals = np.linalg.eigvalsh(matrix)
        if not eigvals[0] > -1e-10 * max(eigvals[-1], 0.0) or eigvals[-1] <= 0.0:
            raise SingularityError(
                "slope covariance is not positive-definite "
                f"(eigenvalue range [{eigvals[0]:g}, {eigvals[-1]:g}])"
            )
        object.__setattr__(self, "matrix", matrix)

    def __len__(self) -> int:
        return self.matrix.shape[0]


@dataclass
class ValidationReport:
    """Errors block a synthesis; warnings accompany one."""

    study_id: str
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def validate_study(study: StudyRegression, catalog: PredictorCatalog) -> ValidationReport:
    """Check one study against the catalog.

    Dimension mismatches and nonpositive variances are errors; missing
    information that merely degrades the synthesis (no MSE, no off-diagonal
    covariance) is a warning.
    """
    report = ValidationReport(study_id=study.id)
    err, warn = report.errors.append, report.warnings.append

    labels = study.labels
    if len(set(labels)) != len(labels):
        err(f"duplicate coefficient labels: {labels}")
    unknown = [lab for lab in labels if lab not in catalog]
    if unknown:
        err(f"labels not in catalog: {unknown}")

    spec = study.cov_spec
    if spec is None:
        warn("no covariance information reported")
    elif len(spec) != len(labels):
        err(
            f"covariance specification has dimension {len(spec)} "
            f"but the study reports {len(labels)} coefficients"
        )
    if isinstance(spec, FullCovariance):
        diag = np.diag(spec.matrix)
        if not np.all(diag > 0.0):
            err(f"covariance diagonal must be positive, got {diag}")
    elif isinstance(spec, (StandardErrors, StandardErrorsWithCommonCorr)):
        if isinstance(spec, StandardErrors):
            warn("off-diagonal covariance unavailable (standard errors only)")
    elif isinstance(spec, XtXInverseWithMse):
        diag = np.diag(spec.matrix)
        if not np.all(diag > 0.0):
            err(f"inverse cross-product diagonal must be positive, got {diag}")

    if study.mse is None:
        warn("no mse reported (pooled-error synthesis unavailable for this study)")
    return report


def validate_collection(
    studies: Sequence[StudyRegression], catalog: PredictorCatalog
) -> list[ValidationReport]:
    """Validate every study, adding cross-study coverage warnings.

    A label reported by only one study is estimable but rests on a single
    source; a catalog label reported by no study makes the stacked system
    unidentifiable (the assembler rejects it).
    """
    reports = [validate_study(s, catalog) for s in studies]
    seen: dict[str, int] = {name: 0 for name in catalog.names}
    for study in studies:
        for lab in study.labels:
            if lab in seen:
                seen[lab] += 1
    for study, report in zip(studies, reports):
        lonely = [lab for lab in study.labels if seen.get(lab) == 1]
        if lonely:
            report.warnings.append(f"labels absent from all other studies: {lonely}")
    return reports


def resolve_covariance(
    study: StudyRegression, corr_fill: Optional[float] = None
) -> SlopeCovariance:
    """Resolve a study's covariance specification into a full SPD matrix.

    ``corr_fill`` fills the off-diagonals of a bare standard-error
    specification with ``corr_fill * se_p * se_q``; a study-supplied common
    correlation takes precedence.  Fails with a ``SingularityError`` naming
    the study when the resulting matrix is not positive-definite (possible
    for extreme correlations).
    """
    spec = study.cov_spec
    if spec is None:
        raise InputError(f"study {study.id!r} has no covariance information")
    if isinstance(spec, StandardErrors) and corr_fill is not None:
        spec = StandardErrorsWithCommonCorr(spec.se, corr_fill)
        filled_by_option = True
    else:
        filled_by_option = False

    try:
        if isinstance(spec, FullCovariance):
            return SlopeCovariance(spec.matrix, Provenance.REPORTED)
        if isinstance(spec, StandardErrors):
            return SlopeCovariance(np.diag(spec.se**2), Provenance.DIAGONAL_ONLY)
        if isinstance(spec, StandardErrorsWithCommonCorr):
            matrix = spec.rho * np.outer(spec.se, spec.se)
            np.fill_diagonal(matrix, spec.se**2)
            return SlopeCovariance(matrix, Provenance.CORR_FILLED, rho=spec.rho)
        if isinstance(spec, XtXInverseWithMse):
            return SlopeCovariance(spec.matrix * spec.mse, Provenance.RECOVERED)
    except SingularityError as exc:
        detail = f" (correlation fill rho = {corr_fill})" if filled_by_option else ""
        raise SingularityError(f"study {study.id!r}{detail}: {exc}") from None
    raise InputError(f"study {study.id!r}: unknown covariance specification {type(spec)!r}")


def recover_xtx_inverse(cov: SlopeCovariance, mse: float) -> np.ndarray:
    """Strip the residual mean square back out of a coefficient covariance.

    Every element of the covariance is divided by ``mse``, recovering the
    study's inverse cross-product matrix.  Only meaningful for covariances
    that carry the study's own error scale (provenance reported/recovered).
    """
    if mse <= 0.0:
        raise InputError(f"mse must be positive, got {mse}")
    if cov.provenance not in (Provenance.REPORTED, Provenance.RECOVERED):
        raise InputError(
            "inverse cross-product recovery requires a reported or recovered "
            f"covariance, not {cov.provenance.value}"
        )
    return cov.matrix / mse


def bivariate_slope(r_xy: float, s_y: float, s_x: float) -> float:
    """Raw slope of a one-predictor regression from the correlation and scales."""
    if not -1.0 <= r_xy <= 1.0:
        raise InputError(f"correlation must lie in [-1, 1], got {r_xy}")
    if s_x <= 0.0 or s_y <= 0.0:
        raise InputError(f"standard deviations must be positive, got s_y={s_y}, s_x={s_x}")
    return r_xy * s_y / s_x


def t_to_d(t: float, df: int) -> float:
    """Standardized mean difference recovered from a t statistic."""
    if df < 1:
        raise InputError(f"degrees of freedom must be >= 1, got {df}")
    return 2.0 * t / math.sqrt(df)
