"""Empirical-Bayes estimation of the cutpoints.

The outer loop alternates a posterior fit at the current cutpoints with a
maximization of ``sum_i log[Phi(alpha_{y_i} - o_i) - Phi(alpha_{y_i - 1} - o_i)]``
over the cutpoints, where ``o_i = x_i' betabar`` is held fixed as an offset.
The inner maximization runs Newton's method in the unconstrained
parametrization ``tau = (alpha_1, log(alpha_2 - alpha_1), ...)``.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .ep import fit_ep
from .errors import (
    ConfoundedIntercept,
    EmptyCategory,
    MaxIterationsExceeded,
    NewtonDivergence,
    UnorderedThresholds,
)
from .mfvb import fit_mfvb
from .model import FitReport, GaussianPrior, OrdinalDataset, Thresholds, tau_to_thresholds, thresholds_to_tau, validate
from .numkern import trunc_terms
from .pmf import fit_pmf

__all__ = [
    "EbOptions",
    "grad_alpha",
    "offset_loglik",
    "maximize_thresholds",
    "initial_thresholds",
    "estimate_thresholds",
]

METHODS = ("mfvb", "pmf", "ep")
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass
class EbOptions:
    method: str = "ep"
    tol: float = 1e-6
    max_outer: int = 50
    fit_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.tol > 0:
            raise ValueError("outer tolerance must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")


def _pdf_ratio(t, log_z):
    """phi(t) / Z computed in log space; zero at infinite t."""
    out = np.zeros_like(log_z)
    fin = np.isfinite(t)
    out[fin] = np.exp(-0.5 * t[fin] ** 2 - _LOG_SQRT_2PI - log_z[fin])
    return out


def offset_loglik(cutpoints, y, offsets, K: int, derivatives: int = 2):
    """Log-likelihood in the cutpoints at fixed offsets, with gradient and Hessian.

    Each observation couples at most two adjacent cutpoints, so the Hessian
    is tridiagonal.  Returns ``(value, grad, hess)``; the last two are
    ``None`` when fewer derivatives are requested.
    """
    cut = np.asarray(cutpoints, dtype=float)
    y = np.asarray(y)
    offsets = np.asarray(offsets, dtype=float)
    ext = np.concatenate(([-np.inf], cut, [np.inf]))
    a = ext[y - 1] - offsets
    b = ext[y] - offsets
    log_z = np.atleast_1d(trunc_terms(a, b)[0]) if y.size else np.zeros(0)
    val = float(np.sum(log_z))
    if derivatives < 1:
        return val, None, None
    gb = _pdf_ratio(b, log_z)
    ga = _pdf_ratio(a, log_z)
    m = K - 1
    up_idx = y - 1          # cutpoint alpha_{y} sits at index y-1
    lo_idx = y - 2          # cutpoint alpha_{y-1}
    has_up = y <= m
    has_lo = y >= 2
    grad = np.bincount(up_idx[has_up], weights=gb[has_up], minlength=m)[:m]
    grad -= np.bincount(lo_idx[has_lo], weights=ga[has_lo], minlength=m)[:m]
    if derivatives < 2:
        return val, grad, None
    bb = np.where(has_up, -np.where(has_up, b, 0.0) * gb - gb * gb, 0.0)
    aa = np.where(has_lo, np.where(has_lo, a, 0.0) * ga - ga * ga, 0.0)
    ab = ga * gb
    hess = np.zeros((m, m))
    hess[np.diag_indices(m)] = (np.bincount(up_idx[has_up], weights=bb[has_up], minlength=m)[:m]
                                + np.bincount(lo_idx[has_lo], weights=aa[has_lo], minlength=m)[:m])
    both = has_up & has_lo
    if np.any(both):
        off = np.bincount(lo_idx[both], weights=ab[both], minlength=m)[: m - 1]
        hess[np.arange(m - 1), np.arange(1, m)] = off
        hess[np.arange(1, m), np.arange(m - 1)] = off
    return val, grad, hess


def grad_alpha(betabar, dataset: OrdinalDataset, thresholds: Thresholds) -> np.ndarray:
    """Gradient of ``sum_i log[Phi(alpha_{y_i} - x_i'b) - Phi(alpha_{y_i-1} - x_i'b)]`` in the cutpoints."""
    offsets = dataset.X @ np.asarray(betabar, dtype=float)
    return offset_loglik(thresholds.cutpoints, dataset.y, offsets, dataset.K, derivatives=1)[1]


def _tau_jacobian(tau):
    m = tau.shape[0]
    J = np.tril(np.ones((m, m)) * np.concatenate(([1.0], np.exp(tau[1:])))[None, :])
    return J


def _tau_objective(tau, y, offsets, K, derivatives=2):
    """Objective, tau-gradient, tau-Hessian and alpha-gradient; ``-inf`` where the map underflows."""
    try:
        alpha = tau_to_thresholds(tau).cutpoints
    except UnorderedThresholds:
        return -np.inf, None, None, None
    val, g, H = offset_loglik(alpha, y, offsets, K, derivatives)
    if derivatives < 2 or not np.isfinite(val):
        return val, None, None, None
    J = _tau_jacobian(tau)
    Ht = J.T @ H @ J
    tail = np.cumsum(g[::-1])[::-1]          # sum_{k >= j} g_k
    Ht[np.arange(1, tau.size), np.arange(1, tau.size)] += np.exp(tau[1:]) * tail[1:]
    return val, J.T @ g, Ht, g


def _ascent_direction(g, H):
    try:
        L = np.linalg.cholesky(-H)
        return np.linalg.solve(L.T, np.linalg.solve(L, g)), False
    except np.linalg.LinAlgError:
        lam, Q = np.linalg.eigh(-H)
        floor = max(1e-8, 1e-6 * np.abs(lam).max())
        lam = np.maximum(np.abs(lam), floor)
        return Q @ ((Q.T @ g) / lam), True


def _golden_search(tau, y, offsets, K, sweeps=50, tol=1e-10):
    f = lambda t: -_tau_objective(t, y, offsets, K, derivatives=0)[0]
    tau = tau.copy()
    best = f(tau)
    for _ in range(sweeps):
        start = best
        for j in range(tau.size):
            def fj(v, j=j):
                t = tau.copy()
                t[j] = v
                return f(t)
            res = optimize.minimize_scalar(fj, bracket=(tau[j] - 0.5, tau[j] + 0.5), method="golden",
                                           options={"xtol": 1e-10})
            if res.fun <= best:
                tau[j] = res.x
                best = res.fun
        if start - best < tol:
            break
    return tau


def maximize_thresholds(y, offsets, K: int, start: Thresholds, gtol: float = 1e-9,
                        max_iter: int = 100) -> tuple[Thresholds, dict]:
    """Newton ascent with Armijo backtracking in tau at fixed offsets.

    Falls back to golden-section coordinate search (emitting
    :class:`NewtonDivergence`) if the line search stalls before the gradient
    vanishes.  Returns the maximizer and a diagnostics dict with the
    per-step objective values.
    """
    tau = thresholds_to_tau(start)
    val, g, H, galpha = _tau_objective(tau, y, offsets, K)
    info = {"newton_steps": 0, "modified_hessian": 0, "fallback": False, "values": [val]}
    ok = False
    for _ in range(max_iter):
        if np.max(np.abs(galpha), initial=0.0) < gtol:
            ok = True
            break
        d, modified = _ascent_direction(g, H)
        info["modified_hessian"] += int(modified)
        slope = float(g @ d)
        step = 1.0
        accepted = False
        # rounding noise of a sum of n log terms; near the optimum the true
        # increase falls below it and plain Armijo would reject a good step
        noise = 1e-14 * max(1.0, abs(val))
        for _ in range(60):
            cand = tau + step * d
            cval = _tau_objective(cand, y, offsets, K, derivatives=0)[0]
            if np.isfinite(cval) and cval >= val + 1e-4 * step * slope - noise:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        tau = cand
        val, g, H, galpha = _tau_objective(tau, y, offsets, K)
        info["newton_steps"] += 1
        info["values"].append(val)
    if not ok:
        warnings.warn("Newton search for the cutpoints stalled; switching to golden-section search",
                      NewtonDivergence, stacklevel=2)
        tau = _golden_search(tau, y, offsets, K)
        info["fallback"] = True
        info["values"].append(_tau_objective(tau, y, offsets, K, derivatives=0)[0])
    result = tau_to_thresholds(tau)
    assert np.all(np.diff(result.cutpoints) > 0)
    return result, info


def initial_thresholds(dataset: OrdinalDataset) -> Thresholds:
    """Normal quantiles of the cumulative category proportions."""
    counts = dataset.counts()
    if dataset.n == 0 or np.any(counts == 0):
        empty = [k + 1 for k in np.flatnonzero(counts == 0)]
        raise EmptyCategory(f"categories without observations: {empty}")
    props = np.cumsum(counts)[:-1] / dataset.n
    return Thresholds(special.ndtri(props))


def _check_intercept(dataset: OrdinalDataset):
    X = dataset.X
    const = np.ptp(X, axis=0) == 0
    bad = np.flatnonzero(const & np.any(X != 0, axis=0))
    if bad.size:
        raise ConfoundedIntercept(f"column(s) {bad.tolist()} are constant and non-zero; "
                                  "cutpoints already absorb the location")


def _run(method, dataset, prior, thresholds, warm, fit_options):
    if method == "mfvb":
        res = fit_mfvb(dataset, prior, thresholds, zbar0=warm, **fit_options)
        return res, res.posterior.mean, res.state.zbar
    if method == "pmf":
        res = fit_pmf(dataset, prior, thresholds, zbar0=warm, **fit_options)
        return res, res.posterior.mean if res.posterior is not None else \
            res.pmf.conditional_mean(res.pmf.zbar), res.pmf.zbar
    res = fit_ep(dataset, prior, thresholds, sites0=warm, **fit_options)
    return res, res.posterior.mean, res.sites


def estimate_thresholds(dataset: OrdinalDataset, prior: GaussianPrior, options: EbOptions | None = None,
                        start: Thresholds | None = None, **kwargs):
    """Alternate posterior fits and cutpoint maximization until the cutpoints settle.

    ``kwargs`` override :class:`EbOptions` fields (``method``, ``tol``,
    ``max_outer``, ``fit_options``).  Latent means (MFVB, PMF) or sites (EP)
    are carried over between outer iterations.

    Returns ``(thresholds, fit, report)`` where ``fit`` is the chosen method's
    result at the returned thresholds and ``report`` records the outer loop:
    one conditional log-likelihood per iteration in ``trace`` and the total
    wall-clock time including every inner fit.
    """
    opts = options if options is not None else EbOptions(**kwargs)
    if options is not None and kwargs:
        opts = EbOptions(**{**opts.__dict__, **kwargs})
    t0 = time.perf_counter()
    validate(dataset, prior)
    alpha = initial_thresholds(dataset) if start is None else start
    _check_intercept(dataset)
    report = FitReport(notes={"method": opts.method, "thresholds": [], "fallbacks": 0, "newton_steps": 0})
    warm = None
    for it in range(1, opts.max_outer + 1):
        fit, betabar, warm = _run(opts.method, dataset, prior, alpha, warm, opts.fit_options)
        offsets = dataset.X @ betabar
        new, info = maximize_thresholds(dataset.y, offsets, dataset.K, alpha)
        report.notes["fallbacks"] += int(info["fallback"])
        report.notes["newton_steps"] += info["newton_steps"]
        report.notes["thresholds"].append(new.cutpoints.tolist())
        report.trace.append(float(info["values"][-1]))
        report.iterations = it
        delta = np.max(np.abs(new.cutpoints - alpha.cutpoints))
        alpha = new
        if delta < opts.tol:
            report.converged = True
            break
    if not report.converged:
        warnings.warn(f"threshold estimation stopped after {opts.max_outer} outer iterations",
                      MaxIterationsExceeded, stacklevel=2)
    fit, _, _ = _run(opts.method, dataset, prior, alpha, warm, opts.fit_options)
    report.elapsed = time.perf_counter() - t0
    return alpha, fit, report
