"""Bayesian inference: priors, likelihoods, samplers, diagnostics and fits."""

from .diagnostics import HpdInterval, ess, hpd, point_estimate, rhat, summarize
from .fitting import FitConfig, FitResult, find_map, fit_fid, fit_nm
from .models import (
    FID_NAMES,
    NM_NAMES,
    UNITS,
    ProbModel,
    build_fid_model,
    build_nm_model,
    fid_params,
    fid_priors,
    fid_vector,
    log_likelihood_fid,
    log_likelihood_nm,
    nm_modified_measure,
    nm_params,
    nm_priors,
    nm_vector,
)
from .predictive import PredictiveSummary, posterior_predictive
from .priors import HalfNormal, Normal, ParamPrior, PriorSpec, Uniform, log_prior
from .samplers import HMCConfig, MHConfig, PosteriorSamples, sample_hmc, sample_mh

__all__ = [
    "FID_NAMES", "NM_NAMES", "UNITS", "FitConfig", "FitResult", "HMCConfig", "HalfNormal",
    "HpdInterval", "MHConfig", "Normal", "ParamPrior", "PosteriorSamples", "PredictiveSummary",
    "PriorSpec", "ProbModel", "Uniform", "build_fid_model", "build_nm_model", "ess",
    "fid_params", "fid_priors", "fid_vector", "find_map", "fit_fid", "fit_nm", "hpd",
    "log_likelihood_fid", "log_likelihood_nm", "log_prior", "nm_modified_measure",
    "nm_params", "nm_priors", "nm_vector", "point_estimate", "posterior_predictive", "rhat",
    "sample_hmc", "sample_mh", "summarize",
]
