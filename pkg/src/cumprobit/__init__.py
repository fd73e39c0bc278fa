"""Approximate Bayesian inference for cumulative probit regression.

Mean-field and partially factorized variational Bayes, expectation
propagation, empirical-Bayes cutpoints, predictive probabilities and a
Gibbs-sampling reference.
"""
from .ebayes import EbOptions, estimate_thresholds, grad_alpha
from .ep import EpGlobal, EpSites, fit_ep, hybrid_moments
from .errors import *  # noqa: F401,F403
from .mfvb import elbo_mfvb, fit_mfvb
from .model import (
    FitReport,
    GaussianPosterior,
    GaussianPrior,
    OrdinalDataset,
    Thresholds,
    read_dataset_csv,
    validate,
)
from .oracle import PosteriorSamples, accuracy_score, gibbs_fit
from .pmf import PmfPosterior, elbo_pmf, fit_pmf, pmf_sample_beta
from .predict import PredictiveDistribution, classify, predict_gaussian, predict_pmf

__version__ = "0.1.0"
