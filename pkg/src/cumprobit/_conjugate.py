"""Quantities shared by the latent-variable fitters and the Gibbs sampler."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GaussianPrior, OrdinalDataset, Thresholds
from .numkern import SpdFactor


@dataclass(eq=False)
class Conjugate:
    """Precomputed pieces of beta | z ~ N(V(Sigma0^{-1} mu0 + X'z), V)."""

    X: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    prior: GaussianPrior
    prec0: np.ndarray
    shift0: np.ndarray
    post_factor: SpdFactor  # Cholesky of V^{-1} = Sigma0^{-1} + X'X
    V: np.ndarray

    @classmethod
    def build(cls, dataset: OrdinalDataset, prior: GaussianPrior, thresholds: Thresholds | None,
              lower=None, upper=None) -> "Conjugate":
        X = np.ascontiguousarray(dataset.X)
        if lower is None:
            lower, upper = thresholds.bounds(dataset.y)
        prec0, shift0 = prior.precision_and_shift()
        fac = SpdFactor(prec0 + X.T @ X, "posterior precision")
        return cls(X, np.asarray(lower, float), np.asarray(upper, float), prior,
                   prec0, shift0, fac, fac.inverse())

    def beta_mean(self, z):
        """``V (Sigma0^{-1} mu0 + X' z)``; ``z`` may be a vector or (m, n) batch."""
        z = np.asarray(z, dtype=float)
        if z.ndim == 1:
            return self.post_factor.solve(self.shift0 + self.X.T @ z)
        return self.post_factor.solve((self.shift0[:, None] + self.X.T @ z.T)).T

    def prior_quad(self, beta) -> float:
        d = beta - self.prior.mean
        return float(d @ self.prec0 @ d)
