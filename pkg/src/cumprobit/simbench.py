"""Simulation experiments: data generation, error against the Gibbs reference, timing, coverage."""
from __future__ import annotations

import csv
import json
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .ebayes import estimate_thresholds
from .ep import fit_ep
from .errors import DegenerateCutoffs
from .mfvb import fit_mfvb
from .model import GaussianPosterior, GaussianPrior, OrdinalDataset, Thresholds
from .numkern import rng_stream
from .oracle import PosteriorSamples, gibbs_fit
from .pmf import fit_pmf

__all__ = [
    "SimConfig",
    "BenchResult",
    "true_beta",
    "gen_dataset",
    "fit_at",
    "moment_errors",
    "error_vs_oracle",
    "run_replication",
    "run_benchmark",
    "warm_up",
    "coverage_study",
    "write_rows_csv",
    "write_json",
]

METHODS = ("mfvb", "pmf", "ep")
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SimConfig:
    n: int = 500
    p: int = 5
    K: int = 5
    reps: int = 100
    seed: int = 0
    pattern: tuple = (0.2, 0.4, 0.4)   # shares of 0, +1, -1 in the true beta
    prior_var: float = 2.0

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if self.K < 2:
            raise ValueError("K must be at least 2")
        if self.reps < 1:
            raise ValueError("reps must be positive")
        if len(self.pattern) != 3 or min(self.pattern) < 0 or abs(sum(self.pattern) - 1.0) > 1e-12:
            raise ValueError("pattern must be three non-negative shares summing to one")

    def prior(self) -> GaussianPrior:
        return GaussianPrior.isotropic(self.p, var=self.prior_var)


def true_beta(p: int, pattern=(0.2, 0.4, 0.4)) -> np.ndarray:
    """Zeros first, then +1, then -1, in the proportions of ``pattern`` (rounded)."""
    zeros = int(round(pattern[0] * p))
    ones = min(int(round(pattern[1] * p)), p - zeros)
    return np.concatenate((np.zeros(zeros), np.ones(ones), -np.ones(p - zeros - ones)))


def gen_dataset(config: SimConfig, rng: np.random.Generator, max_tries: int = 100):
    """Simulate ``(dataset, beta, thresholds)``.

    Covariates are uniform on [0, 1], then each column is shifted and scaled
    to mean 0 and standard deviation 0.5 (population convention).  Cutoffs are
    K-1 sorted uniforms over the observed range of the latent z, redrawn
    while some category is empty.
    """
    X = rng.uniform(size=(config.n, config.p))
    X = (X - X.mean(axis=0)) / X.std(axis=0) * 0.5
    beta = true_beta(config.p, config.pattern)
    z = X @ beta + rng.standard_normal(config.n)
    for _ in range(max_tries):
        cut = np.sort(rng.uniform(z.min(), z.max(), size=config.K - 1))
        y = np.searchsorted(cut, z) + 1
        if np.all(np.bincount(y, minlength=config.K + 1)[1:] > 0) and np.all(np.diff(cut) > 0):
            return OrdinalDataset(X, y, config.K), beta, Thresholds(cut)
    raise DegenerateCutoffs(f"no cutoff draw populated all {config.K} categories in {max_tries} tries")


def fit_at(method: str, dataset, prior, thresholds) -> GaussianPosterior:
    """Gaussian summary of ``method``'s approximation at fixed cutpoints."""
    if method == "mfvb":
        return fit_mfvb(dataset, prior, thresholds).posterior
    if method == "pmf":
        return fit_pmf(dataset, prior, thresholds).posterior
    if method == "ep":
        return fit_ep(dataset, prior, thresholds).posterior
    raise ValueError(f"unknown method {method!r}")


def moment_errors(mean, sd, samples: PosteriorSamples) -> tuple[float, float]:
    """Average absolute differences of posterior means and sds against the draws."""
    return (float(np.mean(np.abs(np.asarray(mean) - samples.mean))),
            float(np.mean(np.abs(np.asarray(sd) - samples.sd))))


@dataclass
class BenchResult:
    """Per-method errors against the reference chain, fit times and coverage indicators."""

    mean_error: dict = field(default_factory=dict)
    sd_error: dict = field(default_factory=dict)
    elapsed: dict = field(default_factory=dict)
    coverage: dict = field(default_factory=dict)

    def rows(self, replication: int = 0):
        out = []
        for metric in ("mean_error", "sd_error", "elapsed"):
            for method, value in getattr(self, metric).items():
                out.append({"replication": replication, "method": method, "metric": metric, "value": value})
        return out


def error_vs_oracle(dataset, prior, thresholds, methods=METHODS, samples: PosteriorSamples | None = None,
                    iterations: int = 5000, burn_in: int = 1000, rng=None) -> BenchResult:
    """Mean and sd errors of each method against a Gibbs chain at the same fixed cutpoints.

    The chain is run only if ``samples`` is not supplied and ``methods`` is
    non-empty.
    """
    result = BenchResult()
    methods = list(methods)
    if not methods:
        return result
    if samples is None:
        samples = gibbs_fit(dataset, prior, thresholds, iterations, burn_in, rng)
    for m in methods:
        t0 = time.perf_counter()
        post = fit_at(m, dataset, prior, thresholds)
        result.elapsed[m] = time.perf_counter() - t0
        result.mean_error[m], result.sd_error[m] = moment_errors(post.mean, post.sd, samples)
    return result


def run_replication(config: SimConfig, rep: int, methods=METHODS, iterations: int = 5000,
                    burn_in: int = 1000) -> BenchResult:
    """One simulated dataset: timed empirical-Bayes fits plus errors against Gibbs.

    Times include threshold estimation.  Errors compare every method at the
    cutpoints estimated by EP, which also condition the Gibbs chain, so that
    differences reflect the approximations rather than the cutpoints.
    """
    data_rng = rng_stream(config.seed, 2 * rep)
    chain_rng = rng_stream(config.seed, 2 * rep + 1)
    dataset, _, _ = gen_dataset(config, data_rng)
    prior = config.prior()
    elapsed, shared = {}, None
    for m in sorted(set(methods) | {"ep"}, key=METHODS.index):
        thr, _, report = estimate_thresholds(dataset, prior, method=m)
        if m in methods:
            elapsed[m] = report.elapsed
        if m == "ep":
            shared = thr
    result = error_vs_oracle(dataset, prior, shared, methods, iterations=iterations, burn_in=burn_in,
                             rng=chain_rng)
    result.elapsed = elapsed
    return result


def _pool_map(fn, args, jobs):
    if jobs <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*args)))


def warm_up():
    """Load the compiled kernels once so that later timings exclude it."""
    config = SimConfig(n=50, p=2, K=3, reps=1, seed=0)
    dataset, _, _ = gen_dataset(config, rng_stream(0))
    for m in METHODS:
        estimate_thresholds(dataset, config.prior(), method=m)


def run_benchmark(config: SimConfig, methods=METHODS, iterations: int = 5000, burn_in: int = 1000,
                  jobs: int = 1) -> list[BenchResult]:
    warm_up()
    args = [(config, r, tuple(methods), iterations, burn_in) for r in range(config.reps)]
    return _pool_map(run_replication, args, jobs)


def _coverage_rep(config: SimConfig, rep: int, levels, methods):
    dataset, beta, _ = gen_dataset(config, rng_stream(config.seed, rep))
    prior = config.prior()
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for m in methods:
            _, fit, report = estimate_thresholds(dataset, prior, method=m)
            post = fit.posterior
            out[m] = {"elapsed": report.elapsed, "hits": {}}
            for level in levels:
                half = _wald_quantile(level) * post.sd
                out[m]["hits"][level] = (np.abs(post.mean - beta) <= half).astype(int).tolist()
    return out


def _wald_quantile(level: float) -> float:
    if level >= 100:
        return np.inf
    return float(special.ndtri(0.5 + level / 200.0))


def coverage_study(config: SimConfig, levels=(80, 90, 95), methods=METHODS, jobs: int = 1) -> dict:
    """Empirical coverage (percent) of Wald intervals per method, level and coefficient.

    Thresholds are estimated by empirical Bayes in every replication.
    Returns ``{"coverage": {method: {level: [per-coefficient %]}},
    "elapsed": {method: [seconds per replication]}}``.
    """
    levels = tuple(levels)
    reps = _pool_map(_coverage_rep, [(config, r, levels, tuple(methods)) for r in range(config.reps)], jobs)
    cov = {m: {lv: (100.0 * np.mean([r[m]["hits"][lv] for r in reps], axis=0)).tolist() for lv in levels}
           for m in methods}
    elapsed = {m: [r[m]["elapsed"] for r in reps] for m in methods}
    return {"coverage": cov, "elapsed": elapsed}


def write_rows_csv(path, rows):
    rows = list(rows)
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["replication", "method", "metric", "value"])
        w.writeheader()
        w.writerows(rows)


def write_json(path, payload: dict):
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def config_dict(config: SimConfig) -> dict:
    d = asdict(config)
    d["pattern"] = list(d["pattern"])
    return d
