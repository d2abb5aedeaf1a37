"""Case-level fits used to verify the synthesis machinery.

Nothing here is needed to run a synthesis from published results; these
routines exist to check the estimators against ground truth whenever raw
data (real or simulated) is available, and to supply tests that summary
statistics alone cannot support (Levene's test, Monte Carlo reference
distributions for the variance-ratio checks).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import stats as _scipy_stats

from .._kernels import ols_batch
from ..design import SynthesisMode, build_system
from ..estimators import pooled_gls_estimate, pooled_mse
from ..exceptions import InputError
from ..inference import TestKind, TestResult
from ..studies import FullCovariance, PredictorCatalog, StudyRegression


@dataclass(frozen=True, eq=False)
class RawDataset:
    """Stacked case-level data partitioned into studies.

    ``x`` carries the leading constant column; ``catalog`` names its
    columns (intercept first).  ``study_labels`` assigns each case to a
    study; studies are ordered by first appearance.
    """

    x: np.ndarray
    y: np.ndarray
    study_labels: np.ndarray
    catalog: PredictorCatalog

    def __post_init__(self):
        x = np.ascontiguousarray(np.asarray(self.x, dtype=float))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=float))
        labels = np.asarray(self.study_labels)
        if x.ndim != 2:
            raise InputError(f"design matrix must be 2-D, got shape {x.shape}")
        if y.shape != (x.shape[0],) or labels.shape != (x.shape[0],):
            raise InputError(
                "design matrix, outcome and study labels must agree in length: "
                f"{x.shape[0]}, {y.shape}, {labels.shape}"
            )
        if x.shape[1] != len(self.catalog):
            raise InputError(
                f"design matrix has {x.shape[1]} columns but the catalog names "
                f"{len(self.catalog)}"
            )
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "study_labels", labels)

    @property
    def study_ids(self) -> tuple[str, ...]:
        seen: dict = {}
        for lab in self.study_labels:
            seen.setdefault(lab, None)
        return tuple(str(lab) for lab in seen)

    def rows_of(self, study_id) -> np.ndarray:
        return np.flatnonzero(self.study_labels == study_id)


@dataclass(frozen=True, eq=False)
class OlsFit:
    """One least-squares fit: coefficients and their error bookkeeping."""

    coef: np.ndarray
    xtx_inv: np.ndarray
    mse: float
    dfe: int
    rss: float

    @property
    def cov(self) -> np.ndarray:
        return self.xtx_inv * self.mse


def ols_fit(x: np.ndarray, y: np.ndarray) -> OlsFit:
    """Ordinary least squares through the kernel backend.

    Returns coefficients, the inverse cross-product matrix, the residual
    mean square and its degrees of freedom.
    """
    x = np.ascontiguousarray(np.asarray(x, dtype=float))
    y = np.ascontiguousarray(np.asarray(y, dtype=float))
    starts = np.array([0, x.shape[0]], dtype=np.int64)
    coef, xtx_inv, rss = ols_batch(x, y, starts)
    dfe = x.shape[0] - x.shape[1]
    return OlsFit(
        coef=coef[0],
        xtx_inv=xtx_inv[0],
        mse=float(rss[0] / dfe),
        dfe=dfe,
        rss=float(rss[0]),
    )


def _columns_for(catalog: PredictorCatalog, labels: Sequence[str]) -> list[int]:
    return [catalog.index(lab) for lab in labels]


def split_and_fit(
    data: RawDataset,
    models: Optional[Mapping[str, Sequence[str]]] = None,
) -> list[StudyRegression]:
    """Fit each study's own model and package the results for synthesis.

    ``models`` maps study id to the coefficient labels that study uses
    (defaults to the full catalog).  Each study comes back with its full
    coefficient covariance and residual mean square; a study that fits its
    cases exactly carries no covariance (there is no error scale to report).
    """
    models = dict(models or {})
    studies = []
    for sid in data.study_ids:
        rows = data.rows_of(sid)
        labels = tuple(models.get(sid, data.catalog.names))
        cols = _columns_for(data.catalog, labels)
        xs = np.ascontiguousarray(data.x[np.ix_(rows, cols)])
        ys = np.ascontiguousarray(data.y[rows])
        try:
            fit = ols_fit(xs, ys)
        except Exception as exc:
            raise type(exc)(f"study {sid!r}: {exc}") from None
        coeffs = dict(zip(labels, fit.coef.tolist()))
        # an interpolating fit leaves only rounding noise in the residual;
        # there is no error scale to report then
        exact = fit.rss <= 1e-20 * max(float(ys @ ys), 1.0)
        if exact:
            cov_spec, mse = None, None
        else:
            cov_spec, mse = FullCovariance(fit.cov), fit.mse
        studies.append(
            StudyRegression(
                id=str(sid), n=len(rows), coefficients=coeffs,
                cov_spec=cov_spec, mse=mse, dfe=fit.dfe,
            )
        )
    return studies


@dataclass(frozen=True, eq=False)
class EquivalenceReport:
    """Pooled-weights synthesis versus one regression on all cases."""

    passed: bool
    max_rel_coef_discrepancy: float
    max_rel_cov_discrepancy: float
    scale_ratio: float
    pooled_mse: float
    full_sample_mse: float
    beta_synthesis: np.ndarray
    beta_full_sample: np.ndarray
    k: int
    n_total: int

    COEF_TOLERANCE = 1e-10


def _max_rel_diff(a: np.ndarray, b: np.ndarray) -> float:
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b) / scale))


def verify_equivalence(data: RawDataset) -> EquivalenceReport:
    """Check that inverse-cross-product weighting reproduces the pooled fit.

    Splits the data, synthesizes through the pooled-MSE route, fits the
    concatenated data in one regression, and reports the worst relative
    coefficient discrepancy plus the ratio of the pooled to the full-sample
    error variance.  Every study must fit the full catalog model.
    """
    studies = split_and_fit(data)
    missing = [s.id for s in studies if s.mse is None]
    if missing:
        raise InputError(
            f"equivalence check needs a positive error variance in every study; "
            f"exact fits: {missing}"
        )
    system = build_system(studies, data.catalog, mode=SynthesisMode.POOLED_MSE)
    s_star = pooled_mse([s.dfe for s in studies], [s.mse for s in studies])
    synthesis = pooled_gls_estimate(system, s_star)
    full = ols_fit(data.x, data.y)

    coef_disc = _max_rel_diff(synthesis.beta_hat, full.coef)
    cov_disc = _max_rel_diff(synthesis.cov_beta, full.xtx_inv * s_star)
    return EquivalenceReport(
        passed=coef_disc < EquivalenceReport.COEF_TOLERANCE,
        max_rel_coef_discrepancy=coef_disc,
        max_rel_cov_discrepancy=cov_disc,
        scale_ratio=s_star / full.mse,
        pooled_mse=s_star,
        full_sample_mse=full.mse,
        beta_synthesis=synthesis.beta_hat,
        beta_full_sample=full.coef,
        k=len(studies),
        n_total=data.x.shape[0],
    )


def study_residuals(
    data: RawDataset,
    models: Optional[Mapping[str, Sequence[str]]] = None,
) -> list[np.ndarray]:
    """Per-study OLS residual vectors, in study order."""
    models = dict(models or {})
    out = []
    for sid in data.study_ids:
        rows = data.rows_of(sid)
        labels = tuple(models.get(sid, data.catalog.names))
        cols = _columns_for(data.catalog, labels)
        xs = np.ascontiguousarray(data.x[np.ix_(rows, cols)])
        ys = np.ascontiguousarray(data.y[rows])
        fit = ols_fit(xs, ys)
        out.append(ys - xs @ fit.coef)
    return out


def levene_test(residual_groups: Sequence[np.ndarray]) -> TestResult:
    """Equality of residual variances, median-centered (robust) variant.

    F statistic of the one-way ANOVA on absolute deviations from each
    group's median, on (k - 1, N - k) degrees of freedom.
    """
    groups = [np.asarray(g, dtype=float).ravel() for g in residual_groups]
    if len(groups) < 2:
        raise InputError("Levene's test requires at least two groups")
    if any(g.size < 2 for g in groups):
        raise InputError("every group needs at least two cases")
    k = len(groups)
    n_total = sum(g.size for g in groups)
    devs = [np.abs(g - np.median(g)) for g in groups]
    group_means = np.array([d.mean() for d in devs])
    sizes = np.array([d.size for d in devs])
    grand = float(np.sum(sizes * group_means) / n_total)
    between = float(np.sum(sizes * (group_means - grand) ** 2))
    within = float(sum(np.sum((d - m) ** 2) for d, m in zip(devs, group_means)))
    df1, df2 = k - 1, n_total - k
    if within == 0.0:
        statistic = 0.0
    else:
        statistic = (between / df1) / (within / df2)
    p = float(_scipy_stats.f.sf(statistic, df1, df2))
    return TestResult(kind=TestKind.LEVENE, statistic=statistic, df=df1, df2=df2, p_value=p)


def levene_from_dataset(
    data: RawDataset,
    models: Optional[Mapping[str, Sequence[str]]] = None,
) -> TestResult:
    return levene_test(study_residuals(data, models))


def variance_check_mc_p(
    dfes: Sequence[int],
    observed: float,
    kind: str = "cochran_c",
    reps: int = 10000,
    seed: int = 0,
) -> float:
    """Monte Carlo null p-value for the residual-variance checks.

    Simulates per-study error variances under a common true variance,
    honoring each study's error degrees of freedom (the classical tables
    assume these are equal).  ``kind`` is ``cochran_c`` or ``f_max``.
    """
    dfes = np.asarray(dfes, dtype=float)
    if dfes.size < 2 or np.any(dfes < 1):
        raise InputError(f"need >= 2 studies with dfe >= 1, got {dfes}")
    if kind not in ("cochran_c", "f_max"):
        raise InputError(f"unknown variance check {kind!r}")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xC0C)))
    draws = rng.chisquare(df=dfes, size=(int(reps), dfes.size)) / dfes
    if kind == "cochran_c":
        sim = draws.max(axis=1) / draws.sum(axis=1)
    else:
        sim = draws.max(axis=1) / draws.min(axis=1)
    return float((1 + np.sum(sim >= observed)) / (reps + 1))
