"""The three synthesis estimators.

* ``gls_estimate`` solves the stacked weighted least-squares problem with
  whatever weight blocks the system carries (full covariances, or their
  diagonals in WLS mode).
* ``wls_univariate`` is the classic inverse-variance pool of one
  coefficient across studies.
* ``pooled_gls_estimate`` weights by the recovered inverse cross-product
  matrices and rescales the parameter covariance by a pooled error
  variance, reproducing the fit a single pooled sample would give.

All solves go through symmetric factorizations of the small normal matrix
and of the per-study blocks; the stacked weight matrix is never inverted
as a whole.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._linalg import cholesky_spd, solve_lower, spd_condition_number
from .design import CONDITION_WARNING_THRESHOLD, StackedSystem, SynthesisMode
from .exceptions import InputError


@dataclass(frozen=True, eq=False)
class SynthesisResult:
    """Estimated parameters, their covariance, and fit diagnostics."""

    beta_hat: np.ndarray
    cov_beta: np.ndarray
    param_labels: tuple[str, ...]
    mode: SynthesisMode
    condition_number: float
    residuals: np.ndarray  # stacked b - W beta_hat
    pooled_mse: Optional[float] = None
    intercept_label: Optional[str] = None
    warnings: tuple[str, ...] = ()

    def __getitem__(self, label: str) -> tuple[float, float]:
        """(estimate, variance) for one parameter label."""
        idx = self.param_labels.index(label)
        return float(self.beta_hat[idx]), float(self.cov_beta[idx, idx])


def _result(system, beta, cov, cond, pooled=None, extra_warnings=()):
    warnings = list(system.warnings) + list(extra_warnings)
    if cond > CONDITION_WARNING_THRESHOLD:
        warnings.append(
            f"normal matrix condition number {cond:.3g} exceeds "
            f"{CONDITION_WARNING_THRESHOLD:.0e}: estimates may be unstable "
            "(multicollinear parameters)"
        )
    intercept = system.catalog.intercept_label
    if intercept is not None and intercept not in system.param_labels:
        intercept = None
    return SynthesisResult(
        beta_hat=beta,
        cov_beta=cov,
        param_labels=system.param_labels,
        mode=system.mode,
        condition_number=cond,
        residuals=system.b - system.w @ beta,
        pooled_mse=pooled,
        intercept_label=intercept,
        warnings=tuple(warnings),
    )


def gls_estimate(system: StackedSystem) -> SynthesisResult:
    """Generalized least squares on the stacked system.

    ``beta_hat = (W' V^-1 W)^-1 W' V^-1 b`` with ``cov_beta`` the inverted
    normal matrix.  On a diagonal-block identity-stack system this reduces,
    parameter by parameter, to the inverse-variance pool of
    ``wls_univariate`` (checked against it in the test suite).
    """
    if system.mode is SynthesisMode.POOLED_MSE:
        raise InputError("pooled-mode systems are estimated by pooled_gls_estimate")

    m, rhs = system.normal_equations()
    low = cholesky_spd(m, "normal matrix W' V^-1 W")
    beta = solve_lower(low.T, solve_lower(low, rhs))
    low_inv = solve_lower(low, np.eye(m.shape[0]))
    cov = low_inv.T @ low_inv
    cond = spd_condition_number(m)
    return _result(system, beta, cov, cond)


def wls_univariate(slopes: Sequence[float], variances: Sequence[float]) -> tuple[float, float]:
    """Inverse-variance pool of one coefficient across studies.

    Returns the combined slope and its variance.
    """
    slopes = np.atleast_1d(np.asarray(slopes, dtype=float))
    variances = np.atleast_1d(np.asarray(variances, dtype=float))
    if slopes.shape != variances.shape or slopes.ndim != 1:
        raise InputError(
            f"slopes and variances must be equal-length vectors, got "
            f"{slopes.shape} and {variances.shape}"
        )
    if slopes.size == 0:
        raise InputError("at least one slope required")
    if np.any(variances <= 0.0):
        raise InputError(f"variances must be positive, got {variances}")
    weights = 1.0 / variances
    total = np.sum(weights)
    return float(np.sum(weights * slopes) / total), float(1.0 / total)


def pooled_mse(dfes: Sequence[float], mses: Sequence[float]) -> float:
    """Error-df-weighted mean of per-study residual mean squares."""
    dfes = np.atleast_1d(np.asarray(dfes, dtype=float))
    mses = np.atleast_1d(np.asarray(mses, dtype=float))
    if dfes.shape != mses.shape or dfes.ndim != 1 or dfes.size == 0:
        raise InputError(
            f"dfes and mses must be equal-length nonempty vectors, got "
            f"{dfes.shape} and {mses.shape}"
        )
    if np.any(dfes < 1.0):
        raise InputError(f"error degrees of freedom must be >= 1, got {dfes}")
    if np.any(mses <= 0.0):
        raise InputError(f"mean squared errors must be positive, got {mses}")
    return float(np.sum(dfes * mses) / np.sum(dfes))


def pooled_gls_estimate(system: StackedSystem, s_star_sq: float) -> SynthesisResult:
    """Synthesis weighted by inverse cross-product matrices.

    The point estimate equals the coefficient vector a single regression on
    the pooled raw data would produce; the parameter covariance is the
    inverted normal matrix rescaled by the pooled error variance
    ``s_star_sq`` (reinstating the error scale the blocks had removed).
    """
    if system.mode is not SynthesisMode.POOLED_MSE:
        raise InputError("pooled_gls_estimate requires a system assembled in pooled mode")
    if s_star_sq <= 0.0:
        raise InputError(f"pooled mse must be positive, got {s_star_sq}")
    m, rhs = system.normal_equations()
    low = cholesky_spd(m, "normal matrix W' (X*)^-1 W")
    beta = solve_lower(low.T, solve_lower(low, rhs))
    low_inv = solve_lower(low, np.eye(m.shape[0]))
    cov = (low_inv.T @ low_inv) * s_star_sq
    cond = spd_condition_number(m)
    return _result(system, beta, cov, cond, pooled=float(s_star_sq))
