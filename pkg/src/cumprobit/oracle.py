"""Reference posterior by data-augmentation Gibbs sampling, and the accuracy score."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import linalg, stats

from ._conjugate import Conjugate
from .errors import InsufficientSamples, DimensionMismatch
from .model import GaussianPrior, OrdinalDataset, Thresholds, validate
from .numkern import norm_pdf, tn_moments, tn_sample

__all__ = ["PosteriorSamples", "gibbs_fit", "accuracy_score"]


@dataclass(frozen=True, eq=False)
class PosteriorSamples:
    """Post-burn-in draws of beta, one row per iteration."""

    draws: np.ndarray
    burn_in: int
    seed: int | None = None

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.draws, dtype=float))
        if d.shape[0] < 1 or not np.all(np.isfinite(d)):
            raise ValueError("draws must be a non-empty finite matrix")
        d.setflags(write=False)
        object.__setattr__(self, "draws", d)

    @property
    def mean(self) -> np.ndarray:
        return self.draws.mean(axis=0)

    @property
    def sd(self) -> np.ndarray:
        return self.draws.std(axis=0, ddof=1)

    def to_csv(self, path, names=None):
        names = names or [f"beta{j + 1}" for j in range(self.draws.shape[1])]
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            w.writerows(self.draws.tolist())


def gibbs_fit(dataset: OrdinalDataset, prior: GaussianPrior, thresholds: Thresholds | None,
              iterations: int = 5000, burn_in: int = 1000, rng=None, bounds=None) -> PosteriorSamples:
    """Alternate beta | z and z | beta at fixed cutpoints.

    ``rng`` may be a Generator or an integer seed.  ``bounds`` replaces the
    truncation limits derived from ``y`` and the cutpoints by explicit
    ``(lower, upper)`` arrays; with all limits infinite the chain targets the
    Gaussian linear-model posterior, which makes the sampler checkable in
    closed form.
    """
    if iterations < 1 or burn_in < 0:
        raise ValueError("iterations must be positive and burn_in non-negative")
    seed = int(rng) if isinstance(rng, (int, np.integer)) else None
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    if bounds is None:
        validate(dataset, prior, thresholds)
        conj = Conjugate.build(dataset, prior, thresholds)
    else:
        validate(dataset, prior)
        lower, upper = (np.broadcast_to(np.asarray(b, float), (dataset.n,)) for b in bounds)
        conj = Conjugate.build(dataset, prior, None, lower=lower, upper=upper)
    X, L = conj.X, conj.post_factor.L
    p = X.shape[1]
    z = tn_moments(conj.lower, conj.upper, X @ prior.mean, 1.0)[0] if dataset.n else np.zeros(0)
    out = np.empty((iterations, p))
    for it in range(burn_in + iterations):
        noise = linalg.solve_triangular(L, rng.standard_normal(p), lower=True, trans="T")
        beta = conj.beta_mean(z) + noise
        if dataset.n:
            z = tn_sample(conj.lower, conj.upper, X @ beta, 1.0, rng)
        if it >= burn_in:
            out[it - burn_in] = beta
    return PosteriorSamples(out, burn_in, seed)


def accuracy_score(samples, approx, coordinate: int, grid_size: int = 512) -> float:
    """Overlap (in percent) between a sampled marginal and an approximate density.

    ``samples`` is a :class:`PosteriorSamples` or a 1-D array of draws of the
    coordinate; ``approx`` is either ``(mean, sd)`` of a Gaussian marginal or
    a vectorized density callback.  ``coordinate`` is 1-based.  The sampled
    marginal is smoothed by a Gaussian KDE with Silverman's bandwidth, and
    ``100 * integral min(kde, approx)`` (equivalently 100 times one minus the
    total variation distance) is computed by the trapezoid rule on a grid
    spanning the pooled support padded by four bandwidths.
    """
    if isinstance(samples, PosteriorSamples):
        if not 1 <= coordinate <= samples.draws.shape[1]:
            raise DimensionMismatch(f"coordinate must lie in 1..{samples.draws.shape[1]}")
        x = samples.draws[:, coordinate - 1]
    else:
        x = np.asarray(samples, dtype=float).ravel()
    if x.size < 100:
        raise InsufficientSamples(f"need at least 100 draws, got {x.size}")
    kde = stats.gaussian_kde(x, bw_method="silverman")
    bw = kde.factor * x.std(ddof=1)
    lo, hi = x.min(), x.max()
    if callable(approx):
        density: Callable = approx
    else:
        mean, sd = (float(v) for v in approx)
        density = lambda t: norm_pdf((t - mean) / sd) / sd
        lo, hi = min(lo, mean - 4.0 * sd), max(hi, mean + 4.0 * sd)
    grid = np.linspace(lo - 4.0 * bw, hi + 4.0 * bw, grid_size)
    overlap = np.trapezoid(np.minimum(kde(grid), density(grid)), grid)
    return float(np.clip(100.0 * overlap, 0.0, 100.0))
