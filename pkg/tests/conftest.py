import numpy as np
import pytest

from slopesynth import FullCovariance, PredictorCatalog, StudyRegression

# (n_i, reported MSE) for the thirteen-school benchmark
TABLE1 = [
    (64, 17.46), (59, 14.24), (67, 14.05), (45, 10.75), (47, 9.32),
    (45, 14.60), (45, 9.80), (56, 13.32), (45, 12.65), (51, 6.50),
    (48, 11.02), (45, 17.65), (47, 13.20),
]

# three schools with published coefficient covariances (upper triangles
# mirrored) and fitted models
SCHOOL_FITS = {
    "school_1": {
        "n": 64, "mse": 17.46,
        "coefficients": {"intercept": 5.470, "math": 0.219, "reading": 0.260},
        "cov": [[1.9340, -0.0648, -0.0302],
                [-0.0648, 0.0058, -0.0043],
                [-0.0302, -0.0043, 0.0098]],
    },
    "school_2": {
        "n": 59, "mse": 14.24,
        "coefficients": {"intercept": 3.591, "math": 0.246, "reading": 0.270},
        "cov": [[1.3018, -0.0218, -0.0482],
                [-0.0218, 0.0028, -0.0030],
                [-0.0482, -0.0030, 0.0092]],
    },
    "school_3": {
        "n": 67, "mse": 14.05,
        "coefficients": {"intercept": 5.619, "math": 0.040, "reading": 0.638},
        "cov": [[5.9953, -0.1449, -0.0817],
                [-0.1449, 0.0082, -0.0063],
                [-0.0817, -0.0063, 0.0164]],
    },
}


@pytest.fixture
def school_catalog():
    return PredictorCatalog(("intercept", "math", "reading"))


@pytest.fixture
def school_studies(school_catalog):
    return [
        StudyRegression(
            id=sid, n=fit["n"], coefficients=fit["coefficients"],
            cov_spec=FullCovariance(fit["cov"]), mse=fit["mse"],
        )
        for sid, fit in SCHOOL_FITS.items()
    ]


def random_spd(rng, dim, jitter=0.5):
    a = rng.normal(size=(dim, dim))
    return a @ a.T + (jitter + dim) * np.eye(dim)


def random_full_studies(rng, k, labels, scale=1.0):
    """k studies all reporting every label, with random SPD covariances."""
    studies = []
    for i in range(k):
        dim = len(labels)
        cov = random_spd(rng, dim) * scale / 50.0
        coeffs = {lab: float(v) for lab, v in zip(labels, rng.normal(size=dim))}
        studies.append(
            StudyRegression(
                id=f"s{i}", n=int(rng.integers(dim + 2, 120)),
                coefficients=coeffs, cov_spec=FullCovariance(cov),
                mse=float(rng.uniform(0.5, 20.0)),
            )
        )
    return studies
