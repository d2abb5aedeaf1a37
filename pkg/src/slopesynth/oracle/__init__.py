"""Raw-data oracle: ground-truth fits, equivalence checks, Monte Carlo."""

from .rawdata import (
    EquivalenceReport,
    OlsFit,
    RawDataset,
    levene_from_dataset,
    levene_test,
    ols_fit,
    split_and_fit,
    study_residuals,
    variance_check_mc_p,
    verify_equivalence,
)
from .simulate import (
    CalibrationReport,
    SimConfig,
    VarianceProbeReport,
    generate,
    paper_shape,
    run_calibration,
    run_variance_probe,
)

__all__ = [
    "CalibrationReport",
    "EquivalenceReport",
    "OlsFit",
    "RawDataset",
    "SimConfig",
    "VarianceProbeReport",
    "generate",
    "levene_from_dataset",
    "levene_test",
    "ols_fit",
    "paper_shape",
    "run_calibration",
    "run_variance_probe",
    "split_and_fit",
    "study_residuals",
    "variance_check_mc_p",
    "verify_equivalence",
]
