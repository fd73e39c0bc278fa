"""Expectation propagation with rank-one Gaussian sites.

Site i approximates the likelihood term of observation i by
``exp(-k_i (x_i'beta)^2 / 2 + w_i x_i'beta)`` up to a constant; the global
approximation is N(S r, S) with ``S^{-1} = Sigma0^{-1} + sum k_i x_i x_i'`` and
``r = Sigma0^{-1} mu0 + sum w_i x_i``.  Updates touch only the direction
``S x_i``, so one sweep costs O(n p^2).
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

from .errors import MaxIterationsExceeded
from .model import FitReport, GaussianPosterior, GaussianPrior, OrdinalDataset, Thresholds, validate
from .numkern import SpdFactor, _core, trunc_terms

__all__ = [
    "EpSites",
    "EpGlobal",
    "EpResult",
    "HybridMoments",
    "hybrid_moments",
    "fit_ep",
    "ep_log_marginal",
]

GUARD = 1e-12


@dataclass(eq=False)
class EpSites:
    """Site precisions ``k``, shifts ``w`` and log normalizers (one per observation)."""

    k: np.ndarray
    w: np.ndarray
    log_z: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "EpSites":
        return cls(np.zeros(n), np.zeros(n), np.zeros(n))

    def copy(self) -> "EpSites":
        return EpSites(self.k.copy(), self.w.copy(), self.log_z.copy())


@dataclass(eq=False)
class EpGlobal:
    """Global approximation in mixed form: covariance ``S`` and natural shift ``r``."""

    S: np.ndarray
    r: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return self.S @ self.r

    def posterior(self) -> GaussianPosterior:
        return GaussianPosterior(self.mean, self.S)


class EpResult(NamedTuple):
    posterior: GaussianPosterior
    report: FitReport
    sites: EpSites
    state: EpGlobal


@dataclass(frozen=True)
class HybridMoments:
    mean: np.ndarray
    cov: np.ndarray
    log_z: float


def hybrid_moments(cav_S, cav_r, x, lower: float, upper: float) -> HybridMoments:
    """Mean, covariance and log normalizer of cavity x truncated-probit likelihood.

    The cavity is N(cav_S cav_r, cav_S); the likelihood is
    ``Phi(upper - x'beta) - Phi(lower - x'beta)``.
    """
    cav_S = np.asarray(cav_S, dtype=float)
    x = np.asarray(x, dtype=float)
    Sx = cav_S @ x
    m = float(Sx @ cav_r)
    s = float(x @ Sx)
    root = math.sqrt(1.0 + s)
    log_z, z1, z2 = trunc_terms((lower - m) / root, (upper - m) / root)
    mean = cav_S @ cav_r - Sx * (z1 / root)
    cov = cav_S - np.outer(Sx, Sx) * ((z1 * z1 + z2) / (1.0 + s))
    return HybridMoments(mean, 0.5 * (cov + cov.T), float(log_z))


@njit(cache=True)
def _sweep(X, lower, upper, S, r, k, w, log_z, order, damping):
    p = X.shape[1]
    Sx = np.empty(p)
    skipped = 0
    for idx in range(order.shape[0]):
        i = order[idx]
        s = 0.0
        for a in range(p):
            acc = 0.0
            for b in range(p):
                acc += S[a, b] * X[i, b]
            Sx[a] = acc
            s += X[i, a] * acc
        ki = k[i]
        wi = w[i]
        den = 1.0 - ki * s
        if den <= GUARD:
            skipped += 1
            continue
        s_c = s / den
        # cavity predictor mean x'S_c (r - w_i x)
        m = 0.0
        for a in range(p):
            m += Sx[a] * (r[a] - wi * X[i, a])
        m /= den
        root = math.sqrt(1.0 + s_c)
        lz, z1, z2 = _core((lower[i] - m) / root, (upper[i] - m) / root)
        c = z1 * z1 + z2
        if c < 0.0:
            c = 0.0
        elif c > 1.0:
            c = 1.0
        k_new = c / (1.0 + s_c * (1.0 - c))
        w_new = k_new * m - z1 * (1.0 + k_new * s_c) / root
        k_d = damping * k_new + (1.0 - damping) * ki
        w_d = damping * w_new + (1.0 - damping) * wi
        den2 = 1.0 + k_d * s_c
        if den2 <= GUARD or not (math.isfinite(k_d) and math.isfinite(w_d)):
            skipped += 1
            continue
        coef = ki / den - k_d / (den * den * den2)
        for a in range(p):
            ca = coef * Sx[a]
            for b in range(a, p):
                S[a, b] += ca * Sx[b]
        for a in range(p):
            for b in range(a + 1, p):
                S[b, a] = S[a, b]
        for a in range(p):
            r[a] += (w_d - wi) * X[i, a]
        k[i] = k_d
        w[i] = w_d
        log_z[i] = (0.5 * (2.0 * w_d * m + w_d * w_d * s_c - k_d * m * m) / den2
                    - 0.5 * math.log(den2) - lz)
    return skipped


def _refresh(X, prec0, shift0, sites: EpSites) -> EpGlobal:
    """Rebuild the global approximation from the sites (limits drift of the rank-one updates)."""
    fac = SpdFactor(prec0 + X.T @ (sites.k[:, None] * X), "EP precision")
    return EpGlobal(fac.inverse(), shift0 + X.T @ sites.w)


def ep_log_marginal(state: EpGlobal, sites: EpSites, prior: GaussianPrior) -> float:
    """EP approximation to log p(y | thresholds).

    Zero with no sites; with a single site it equals the exact log likelihood
    of that observation.
    """
    prior_fac = prior.factor()
    logdet_S = np.linalg.slogdet(state.S)[1]
    r0 = prior_fac.solve(prior.mean)
    return float(0.5 * logdet_S + 0.5 * state.r @ state.S @ state.r
                 - 0.5 * prior_fac.logdet() - 0.5 * prior.mean @ r0
                 - np.sum(sites.log_z))


def fit_ep(dataset: OrdinalDataset, prior: GaussianPrior, thresholds: Thresholds,
           epsilon: float = 1e-6, max_sweeps: int = 1000, damping: float = 1.0,
           order=None, sites0: EpSites | None = None, refresh: bool = True) -> EpResult:
    """Sequential EP.

    Sweeps over the sites (ascending index, or ``order``; ``order="reverse"``
    is accepted) until the log-marginal approximation changes by less than
    ``epsilon`` in absolute value.  ``damping`` in (0, 1] mixes new and old site
    parameters.  ``sites0`` warm-starts from earlier sites.  Sites whose update
    would break positive definiteness are left unchanged; their count is in
    ``report.notes["skipped"]``.

    With ``refresh`` (the default) the global approximation is rebuilt from
    the sites after every sweep, which stops rounding error in the rank-one
    updates from accumulating; ``refresh=False`` keeps the purely
    incremental state.
    """
    validate(dataset, prior, thresholds)
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    t0 = time.perf_counter()
    n = dataset.n
    X = np.ascontiguousarray(dataset.X)
    lower, upper = thresholds.bounds(dataset.y)
    lower = np.ascontiguousarray(lower, dtype=float)
    upper = np.ascontiguousarray(upper, dtype=float)
    prec0, shift0 = prior.precision_and_shift()
    if isinstance(order, str):
        if order != "reverse":
            raise ValueError(f"unknown order {order!r}")
        order = np.arange(n)[::-1].copy()
    order = np.arange(n) if order is None else np.ascontiguousarray(order, dtype=np.int64)
    sites = EpSites.zeros(n) if sites0 is None else sites0.copy()
    if sites.k.shape[0] != n:
        raise ValueError(f"sites0 has {sites.k.shape[0]} sites, dataset has {n}")
    state = _refresh(X, prec0, shift0, sites)
    report = FitReport(notes={"skipped": 0})
    prev = ep_log_marginal(state, sites, prior) if n == 0 else np.nan
    if n == 0:
        report.trace.append(prev)
        report.converged = True
    for it in range(1, max_sweeps + 1 if n else 1):
        skipped = _sweep(X, lower, upper, state.S, state.r, sites.k, sites.w, sites.log_z, order, damping)
        report.notes["skipped"] += int(skipped)
        if refresh:
            state = _refresh(X, prec0, shift0, sites)
        val = ep_log_marginal(state, sites, prior)
        report.trace.append(val)
        report.iterations = it
        if it >= 2 and abs(val - prev) < epsilon:
            report.converged = True
            break
        prev = val
    if not report.converged:
        warnings.warn(f"EP stopped after {max_sweeps} sweeps", MaxIterationsExceeded, stacklevel=2)
    report.elapsed = time.perf_counter() - t0
    return EpResult(state.posterior(), report, sites, state)
