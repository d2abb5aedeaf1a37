"""Distribution tails against independent high-precision oracles."""

import math

import mpmath as mp
import numpy as np
import pytest

from slopesynth import InputError, chi_sq_sf, normal_quantile, normal_sf
from slopesynth.special import chi_sq_quantile, normal_cdf


def chi_sq_sf_oracle(x, df):
    """Regularized upper incomplete gamma via mpmath (50 digits)."""
    with mp.workdps(50):
        return float(mp.gammainc(mp.mpf(df) / 2, mp.mpf(x) / 2, mp.inf, regularized=True))


def test_chi_sq_sf_boundaries():
    for df in (1, 5, 200):
        assert chi_sq_sf(0.0, df) == 1.0


def test_chi_sq_sf_table_value():
    # 95th percentile of chi-squared(1)
    assert chi_sq_sf(3.841, 1) == pytest.approx(0.05, abs=5e-4)
    assert chi_sq_sf(3.841458820694124, 1) == pytest.approx(0.05, abs=1e-12)


def test_chi_sq_sf_accuracy_grid():
    worst = 0.0
    for df in (1, 2, 3, 7, 24, 36, 50, 101, 200):
        for x in (1e-8, 0.5, 1.0, df / 2, df - 1.0, df + 0.999, df + 1.001,
                  1.5 * df, 3.0 * df, 8.0 * df):
            got = chi_sq_sf(float(x), df)
            want = chi_sq_sf_oracle(x, df)
            worst = max(worst, abs(got - want))
    assert worst < 1e-10


def test_chi_sq_sf_domain_errors():
    with pytest.raises(InputError):
        chi_sq_sf(1.0, 0)
    with pytest.raises(InputError):
        chi_sq_sf(-0.5, 3)


def test_normal_sf_basics():
    assert normal_sf(0.0) == 0.5
    assert normal_sf(8.0) < 1e-15
    # symmetry
    for z in (0.3, 1.2, 4.4):
        assert normal_sf(-z) == pytest.approx(1.0 - normal_sf(z), abs=1e-15)


def test_normal_sf_accuracy():
    with mp.workdps(50):
        for z in np.linspace(-8, 8, 65):
            want = float(mp.ncdf(-mp.mpf(float(z))))
            assert normal_sf(float(z)) == pytest.approx(want, abs=1e-14)


def test_normal_quantile_round_trip():
    for p in (1e-10, 0.001, 0.025, 0.3, 0.5, 0.7, 0.975, 0.999, 1 - 1e-10):
        z = normal_quantile(p)
        assert normal_cdf(z) == pytest.approx(p, rel=1e-10, abs=1e-13)
    assert normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-12)
    with pytest.raises(InputError):
        normal_quantile(0.0)
    with pytest.raises(InputError):
        normal_quantile(1.0)


def test_chi_sq_quantile_round_trip():
    for df in (1, 2, 24, 36, 200):
        for alpha in (0.001, 0.05, 0.5, 0.9):
            x = chi_sq_quantile(alpha, df)
            assert chi_sq_sf(x, df) == pytest.approx(alpha, rel=1e-9)


def test_tail_underflow_is_clean():
    # enormous statistics give exactly 0.0, never negative or NaN
    p = chi_sq_sf(1e6, 3)
    assert p == 0.0 or 0.0 < p < 1e-300
    assert math.isfinite(normal_sf(40.0))
