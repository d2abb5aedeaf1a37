"""Significance tests, confidence intervals, and homogeneity statistics.

All p-values are two-sided and come from large-sample normal or chi-squared
reference distributions.  The residual-variance checks (Cochran's C, the
max/min variance ratio) are reported as bare statistics: their classical
critical values assume equal group sizes, so judgment -- or a Monte Carlo
reference from the raw-data oracle -- is left to the analyst.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._linalg import cholesky_spd, solve_lower
from .design import StackedSystem, SynthesisMode
from .estimators import SynthesisResult, gls_estimate, pooled_gls_estimate
from .exceptions import InputError
from .special import chi_sq_sf, normal_quantile, normal_sf


class TestKind(enum.Enum):
    __test__ = False  # not a pytest class, despite the name

    Z = "z"
    Q_E = "q_e"
    Q_B = "q_b"
    COCHRAN_C = "cochran_c"
    F_MAX = "f_max"
    LEVENE = "levene"


@dataclass(frozen=True)
class TestResult:
    """A test statistic with its reference-distribution bookkeeping.

    ``df`` is absent for Z tests; ``df2`` is the denominator df of F-shaped
    statistics; ``p_value`` is absent for the statistic-only variance checks.
    """

    __test__ = False  # not a pytest class, despite the name

    kind: TestKind
    statistic: float
    df: Optional[int] = None
    df2: Optional[int] = None
    p_value: Optional[float] = None

    def __post_init__(self):
        if self.p_value is not None and not 0.0 <= self.p_value <= 1.0:
            raise InputError(f"p-value out of range: {self.p_value}")


def z_test(beta_p: float, c_pp: float) -> TestResult:
    """Standard normal test of one synthesized parameter against zero."""
    if c_pp <= 0.0:
        raise InputError(f"parameter variance must be positive, got {c_pp}")
    z = beta_p / math.sqrt(c_pp)
    return TestResult(kind=TestKind.Z, statistic=z, p_value=2.0 * normal_sf(abs(z)))


def confidence_interval(beta_p: float, c_pp: float, alpha: float = 0.05) -> tuple[float, float]:
    """Symmetric large-sample interval ``beta_p +/- z_(1-alpha/2) sqrt(c_pp)``."""
    if c_pp <= 0.0:
        raise InputError(f"parameter variance must be positive, got {c_pp}")
    if not 0.0 < alpha < 1.0:
        raise InputError(f"alpha must lie in (0, 1), got {alpha}")
    half = normal_quantile(1.0 - alpha / 2.0) * math.sqrt(c_pp)
    return beta_p - half, beta_p + half


def _q_e_df(system: StackedSystem) -> int:
    k = system.k
    if not system.full_model:
        # studies fit different reduced models: residual rank of the stack
        return system.n_rows - system.n_params
    if system.moderator_count == 0:
        return (k - 1) * system.beta_count  # == n_rows - n_params
    # conventional df for moderator columns on full-model stacks; note the
    # residual rank is rows - cols, so this variant is conservative
    return (k - 1) * (system.beta_count + system.moderator_count)


def q_e(system: StackedSystem, result: SynthesisResult, slopes_only: bool = False) -> TestResult:
    """Homogeneity of the stacked coefficients around the fitted model.

    ``(b - W beta_hat)' V^-1 (b - W beta_hat)``, chi-squared under the
    fixed-effects null.  With ``slopes_only`` the intercept rows are
    projected out and the subsystem re-estimated before the quadratic form,
    so the statistic ignores intercept disagreement entirely.  Requesting
    ``slopes_only`` on a system that never stacked intercepts is a no-op.
    """
    if slopes_only and system.has_intercept_rows:
        sub = system.project_slopes_only()
        if system.mode is SynthesisMode.POOLED_MSE:
            if result.pooled_mse is None:
                raise InputError("pooled-mode q_e needs the pooled mse from the result")
            sub_result = pooled_gls_estimate(sub, result.pooled_mse)
        else:
            sub_result = gls_estimate(sub)
        return q_e(sub, sub_result, slopes_only=False)

    scale = 1.0
    if system.mode is SynthesisMode.POOLED_MSE:
        if result.pooled_mse is None:
            raise InputError("pooled-mode q_e needs the pooled mse from the result")
        scale = result.pooled_mse
    statistic = max(system.weighted_quadratic(result.residuals, scale), 0.0)
    df = _q_e_df(system)
    p = 1.0 if df == 0 else chi_sq_sf(statistic, df)
    return TestResult(kind=TestKind.Q_E, statistic=statistic, df=df, p_value=p)


def q_b(result: SynthesisResult, slopes_only: bool = False) -> TestResult:
    """Composite test that the synthesized parameter vector is zero.

    ``beta_hat' Cov(beta_hat)^-1 beta_hat`` on as many degrees of freedom
    as parameters tested.  The inverse weighting is what makes the statistic
    chi-squared under the null.
    """
    beta = result.beta_hat
    cov = result.cov_beta
    if slopes_only and result.intercept_label is not None:
        keep = [j for j, lab in enumerate(result.param_labels) if lab != result.intercept_label]
        beta = beta[keep]
        cov = cov[np.ix_(keep, keep)]
    if beta.size == 0:
        raise InputError("no parameters left to test")
    low = cholesky_spd(cov, "parameter covariance")
    z = solve_lower(low, beta)
    statistic = float(z @ z)
    df = int(beta.size)
    return TestResult(kind=TestKind.Q_B, statistic=statistic, df=df, p_value=chi_sq_sf(statistic, df))


def _check_mses(mses: Sequence[float]) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(mses, dtype=float))
    if arr.size < 2:
        raise InputError("variance comparison requires at least two studies")
    if np.any(arr <= 0.0):
        raise InputError(f"mean squared errors must be positive, got {arr}")
    return arr


def cochran_c(mses: Sequence[float]) -> TestResult:
    """Largest error variance as a share of their total (statistic only)."""
    arr = _check_mses(mses)
    return TestResult(kind=TestKind.COCHRAN_C, statistic=float(arr.max() / arr.sum()))


def f_max(mses: Sequence[float]) -> TestResult:
    """Ratio of the largest to the smallest error variance (statistic only)."""
    arr = _check_mses(mses)
    return TestResult(kind=TestKind.F_MAX, statistic=float(arr.max() / arr.min()))
