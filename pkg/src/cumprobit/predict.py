"""Predictive class probabilities and classification."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .model import GaussianPosterior, Thresholds
from .numkern import norm_cdf, tn_sample
from .pmf import PmfPosterior

__all__ = ["PredictiveDistribution", "predict_gaussian", "predict_pmf", "classify"]


@dataclass(frozen=True, eq=False)
class PredictiveDistribution:
    """Predictive distribution for m query rows.

    ``cumulative[r, k-1] = pr(y <= k)`` for k = 1..K-1 and ``probs[r, k-1] =
    pr(y = k)``.  Probabilities are differences of the padded cumulative
    vector (0, F_1, ..., F_{K-1}, 1), so each row telescopes to one.
    """

    probs: np.ndarray
    cumulative: np.ndarray

    @classmethod
    def from_cumulative(cls, F) -> "PredictiveDistribution":
        F = np.atleast_2d(np.asarray(F, dtype=float))
        F = np.clip(np.maximum.accumulate(F, axis=1), 0.0, 1.0)
        m = F.shape[0]
        padded = np.hstack((np.zeros((m, 1)), F, np.ones((m, 1))))
        return cls(np.diff(padded, axis=1), F)

    @property
    def K(self) -> int:
        return self.probs.shape[1]

    def __len__(self):
        return self.probs.shape[0]


def _check(Xnew, p):
    Xnew = np.atleast_2d(np.asarray(Xnew, dtype=float))
    if Xnew.shape[1] != p:
        raise DimensionMismatch(f"new data has {Xnew.shape[1]} columns, model has {p}")
    return Xnew


def predict_gaussian(post: GaussianPosterior, thresholds: Thresholds, Xnew) -> PredictiveDistribution:
    """Closed-form predictive under a Gaussian approximation N(mean, cov)."""
    Xnew = _check(Xnew, post.mean.shape[0])
    loc = Xnew @ post.mean
    scale = np.sqrt(1.0 + np.einsum("ij,jk,ik->i", Xnew, post.cov, Xnew))
    F = norm_cdf((thresholds.cutpoints[None, :] - loc[:, None]) / scale[:, None])
    return PredictiveDistribution.from_cumulative(F)


def predict_pmf(post: PmfPosterior, thresholds: Thresholds, Xnew, draws: int = 1000,
                rng: np.random.Generator | None = None, chunk: int = 1000) -> PredictiveDistribution:
    """Monte Carlo predictive under the PMF approximation.

    Averages ``Phi((alpha_k - x'V(Sigma0^{-1}mu0 + X'z)) / sqrt(1 + x'Vx))``
    over draws z ~ q(z).  The same draws serve every cutpoint and every query
    row, so each draw contributes a monotone cumulative vector.
    """
    if draws < 1:
        raise ValueError("draws must be at least 1")
    rng = np.random.default_rng() if rng is None else rng
    Xnew = _check(Xnew, post.V.shape[0])
    scale = np.sqrt(1.0 + np.einsum("ij,jk,ik->i", Xnew, post.V, Xnew))
    cut = thresholds.cutpoints
    F = np.zeros((Xnew.shape[0], cut.shape[0]))
    for start in range(0, draws, chunk):
        m = min(chunk, draws - start)
        if post.n:
            z = tn_sample(post.lower, post.upper, post.xi, post.sigma, rng, size=(m, post.n))
        else:
            z = np.zeros((m, 0))
        loc = post.conditional_mean(z) @ Xnew.T          # (m, rows)
        F += norm_cdf((cut[None, None, :] - loc[:, :, None]) / scale[None, :, None]).sum(axis=0)
    return PredictiveDistribution.from_cumulative(F / draws)


def classify(dist) -> np.ndarray | int:
    """Most probable category (1-based); ties go to the smallest category.

    Accepts a :class:`PredictiveDistribution` (one label per row) or a single
    probability vector (returns an int).
    """
    if isinstance(dist, PredictiveDistribution):
        return np.argmax(dist.probs, axis=1) + 1
    probs = np.asarray(dist, dtype=float)
    if probs.ndim == 1:
        return int(np.argmax(probs)) + 1
    return np.argmax(probs, axis=1) + 1
