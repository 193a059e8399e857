"""Multi-sample density ratio model estimation and semiparametric regression."""

from ._core import (
    InputError,
    Model,
    NumericError,
    StepCdf,
    TiltedKde,
    asymptotic_covariance,
    fit,
    gof_report,
    load,
    nadaraya_watson,
    nw_default_bandwidths,
    ols_fit,
    predict,
    predict_batch,
    predict_detail,
    reference_cdf,
    run_study,
    sample_mvcauchy,
    sample_mvn,
    sample_triangle_uniform,
    tilted_cdf,
    tilted_kde,
    wald_tests,
)

__all__ = [
    "InputError",
    "Model",
    "NumericError",
    "StepCdf",
    "TiltedKde",
    "asymptotic_covariance",
    "fit",
    "gof_report",
    "load",
    "nadaraya_watson",
    "nw_default_bandwidths",
    "ols_fit",
    "predict",
    "predict_batch",
    "predict_detail",
    "reference_cdf",
    "run_study",
    "sample_mvcauchy",
    "sample_mvn",
    "sample_triangle_uniform",
    "tilted_cdf",
    "tilted_kde",
    "wald_tests",
]

__version__ = "0.1.0"
