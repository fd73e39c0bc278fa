"""Mean-field variational Bayes, q(beta, z) = q(beta) prod_i q(z_i)."""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._conjugate import Conjugate
from .errors import MaxIterationsExceeded
from .model import FitReport, GaussianPosterior, GaussianPrior, OrdinalDataset, Thresholds, validate
from .numkern import trunc_terms

__all__ = ["MfvbState", "MfvbResult", "fit_mfvb", "elbo_mfvb"]


@dataclass(eq=False)
class MfvbState:
    zbar: np.ndarray
    betabar: np.ndarray
    V: np.ndarray
    prior_shift: np.ndarray


class MfvbResult(NamedTuple):
    posterior: GaussianPosterior
    report: FitReport
    state: MfvbState


def _z_update(conj: Conjugate, beta):
    eta = conj.X @ beta
    log_z, z1, _ = trunc_terms(conj.lower - eta, conj.upper - eta)
    return eta - z1, log_z


def _elbo(conj: Conjugate, beta, log_z) -> float:
    return float(np.sum(log_z)) - 0.5 * conj.prior_quad(beta)


def elbo_mfvb(state: MfvbState, dataset: OrdinalDataset, prior: GaussianPrior,
              thresholds: Thresholds, full: bool = False) -> float:
    """Mean-field ELBO at ``state.betabar`` with q(z) at its optimum.

    By default the additive constant is dropped.  With ``full=True`` the
    constant ``-0.5 log|I + Sigma0 X'X|`` is added back, giving the actual
    lower bound on log p(y) (used to compare against the PMF bound).
    """
    lower, upper = thresholds.bounds(dataset.y)
    eta = dataset.X @ state.betabar
    log_z = trunc_terms(lower - eta, upper - eta)[0]
    d = state.betabar - prior.mean
    val = float(np.sum(log_z)) - 0.5 * float(d @ prior.factor().solve(d))
    if full:
        val += 0.5 * (np.linalg.slogdet(state.V)[1] - prior.factor().logdet())
    return val


def fit_mfvb(dataset: OrdinalDataset, prior: GaussianPrior, thresholds: Thresholds,
             epsilon: float = 1e-6, max_iter: int = 1000, zbar0=None) -> MfvbResult:
    """Coordinate-ascent mean-field approximation.

    Each iteration sets ``betabar = V (Sigma0^{-1} mu0 + X' zbar)`` and then
    every ``zbar_i`` to the mean of its truncated normal at location
    ``x_i' betabar``.  Stops when the ELBO increases by less than
    ``epsilon``.  ``zbar0`` overrides the default start (truncated-normal
    means at the prior-mean predictor), e.g. for warm starts.

    Returns ``(posterior, report, state)``; the posterior covariance is ``V``.
    """
    validate(dataset, prior, thresholds)
    t0 = time.perf_counter()
    conj = Conjugate.build(dataset, prior, thresholds)
    if zbar0 is None:
        zbar, log_z = _z_update(conj, prior.mean)
        prev = _elbo(conj, prior.mean, log_z)
    else:
        zbar = np.array(zbar0, dtype=float)
        prev = -np.inf
    report = FitReport()
    min_iter = 1 if dataset.n == 0 else 2
    beta = np.array(prior.mean, dtype=float)
    for it in range(1, max_iter + 1):
        beta = conj.beta_mean(zbar)
        zbar, log_z = _z_update(conj, beta)
        elbo = _elbo(conj, beta, log_z)
        report.trace.append(elbo)
        report.iterations = it
        if it >= min_iter and elbo - prev < epsilon:
            report.converged = True
            break
        prev = elbo
    if not report.converged:
        warnings.warn(f"MFVB stopped after {max_iter} iterations", MaxIterationsExceeded, stacklevel=2)
    report.elapsed = time.perf_counter() - t0
    state = MfvbState(zbar, beta, conj.V, conj.shift0)
    return MfvbResult(GaussianPosterior(beta, conj.V), report, state)
