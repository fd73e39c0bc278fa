"""Datasets, priors, thresholds and fit results for the cumulative probit model."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CategoryOutOfRange,
    DimensionMismatch,
    NonFiniteInput,
    NotPositiveDefinite,
    UnorderedThresholds,
)
from .numkern import SpdFactor

__all__ = [
    "OrdinalDataset",
    "GaussianPrior",
    "Thresholds",
    "GaussianPosterior",
    "FitReport",
    "validate",
    "thresholds_to_tau",
    "tau_to_thresholds",
    "read_dataset_csv",
    "read_design_csv",
]


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class OrdinalDataset:
    """Design matrix ``X`` (n x p) and responses ``y`` coded 1..K."""

    X: np.ndarray
    y: np.ndarray
    K: int

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else X.reshape(0, 0)
        object.__setattr__(self, "X", _frozen(X))
        y = np.asarray(self.y)
        if y.size and not np.all(np.mod(y, 1) == 0):
            raise CategoryOutOfRange("responses must be integer category codes")
        object.__setattr__(self, "y", _frozen(y, dtype=np.int64))
        object.__setattr__(self, "K", int(self.K))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def counts(self) -> np.ndarray:
        """Number of observations in each category 1..K."""
        return np.bincount(self.y - 1, minlength=self.K)[: self.K]


@dataclass(frozen=True, eq=False)
class GaussianPrior:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(np.atleast_1d(self.mean)))
        object.__setattr__(self, "cov", _frozen(np.atleast_2d(self.cov)))

    @classmethod
    def isotropic(cls, p: int, var: float = 2.0, mean: float = 0.0) -> "GaussianPrior":
        return cls(np.full(p, float(mean)), float(var) * np.eye(p))

    @property
    def p(self) -> int:
        return self.mean.shape[0]

    def factor(self) -> SpdFactor:
        return SpdFactor(self.cov, "prior covariance")

    def precision_and_shift(self):
        """Return ``(Sigma0^{-1}, Sigma0^{-1} mu0)``."""
        fac = self.factor()
        return fac.inverse(), fac.solve(self.mean)


@dataclass(frozen=True, eq=False)
class Thresholds:
    """Finite cutpoints alpha_1 < ... < alpha_{K-1}; alpha_0 = -inf, alpha_K = +inf."""

    cutpoints: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "cutpoints", _frozen(np.atleast_1d(self.cutpoints)))

    @property
    def K(self) -> int:
        return self.cutpoints.shape[0] + 1

    def extended(self) -> np.ndarray:
        """``(alpha_0, ..., alpha_K)`` including the infinite ends."""
        return np.concatenate(([-np.inf], self.cutpoints, [np.inf]))

    def bounds(self, y):
        """Lower and upper truncation limits for responses ``y``."""
        ext = self.extended()
        y = np.asarray(y)
        return ext[y - 1], ext[y]

    def __repr__(self):
        return f"Thresholds({np.array2string(self.cutpoints, precision=6)})"


@dataclass(frozen=True, eq=False)
class GaussianPosterior:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(self.mean))
        object.__setattr__(self, "cov", _frozen(self.cov))

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))


@dataclass(eq=False)
class FitReport:
    """Convergence record of one fit.

    ``trace`` holds one objective value per iteration (ELBO with the
    additive constant dropped, or the EP log-marginal approximation).
    Traces are comparable within a fit, not across priors.
    """

    trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    elapsed: float = 0.0
    notes: dict = field(default_factory=dict)

    @property
    def final_objective(self) -> float:
        return self.trace[-1] if self.trace else float("nan")

    def to_dict(self) -> dict:
        return {
            "trace": [float(v) for v in self.trace],
            "iterations": self.iterations,
            "converged": self.converged,
            "elapsed": self.elapsed,
            "final_objective": self.final_objective,
            **({"notes": self.notes} if self.notes else {}),
        }


def validate(dataset: OrdinalDataset, prior: GaussianPrior, thresholds: Thresholds | None = None):
    """Check that dataset, prior and thresholds are valid and mutually consistent.

    ``thresholds`` may be omitted when they are about to be estimated.
    Raises one of :class:`DimensionMismatch`, :class:`CategoryOutOfRange`,
    :class:`NonFiniteInput`, :class:`UnorderedThresholds` or
    :class:`NotPositiveDefinite`.
    """
    X, y = dataset.X, dataset.y
    if X.ndim != 2:
        raise DimensionMismatch("X must be two-dimensional")
    if X.shape[1] == 0:
        raise DimensionMismatch("X must have at least one column")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"y has length {y.shape[0]}, X has {X.shape[0]} rows")
    if dataset.K < 2:
        raise CategoryOutOfRange("K must be at least 2")
    if y.size and (y.min() < 1 or y.max() > dataset.K):
        raise CategoryOutOfRange(f"responses must lie in 1..{dataset.K}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("X contains non-finite values")
    if prior.mean.ndim != 1 or prior.mean.shape[0] != X.shape[1]:
        raise DimensionMismatch(f"prior mean has length {prior.mean.shape[0]}, X has {X.shape[1]} columns")
    if prior.cov.shape != (X.shape[1], X.shape[1]):
        raise DimensionMismatch(f"prior covariance has shape {prior.cov.shape}")
    if not (np.all(np.isfinite(prior.mean)) and np.all(np.isfinite(prior.cov))):
        raise NonFiniteInput("prior contains non-finite values")
    prior.factor()
    if thresholds is not None:
        cut = thresholds.cutpoints
        if cut.ndim != 1 or cut.shape[0] != dataset.K - 1:
            raise DimensionMismatch(f"expected {dataset.K - 1} cutpoints, got {cut.shape[0]}")
        if not np.all(np.isfinite(cut)):
            raise NonFiniteInput("cutpoints must be finite")
        if np.any(np.diff(cut) <= 0):
            raise UnorderedThresholds(f"cutpoints must be strictly increasing: {cut}")


def thresholds_to_tau(t: Thresholds) -> np.ndarray:
    """Map cutpoints to ``(alpha_1, log(alpha_2 - alpha_1), ...)``."""
    a = t.cutpoints
    return np.concatenate((a[:1], np.log(np.diff(a))))


def tau_to_thresholds(tau) -> Thresholds:
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if not np.all(np.isfinite(tau)):
        raise NonFiniteInput("tau must be finite")
    alpha = np.cumsum(np.concatenate((tau[:1], np.exp(tau[1:]))))
    if np.any(np.diff(alpha) <= 0):
        # increments too small to register at this magnitude
        raise UnorderedThresholds("log-increments underflow relative to cutpoint magnitude")
    return Thresholds(alpha)


# ---------------------------------------------------------------------------
# CSV ingestion


def _read_csv(path):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DimensionMismatch(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DimensionMismatch(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        if any(v.strip() == "" or v.strip().upper() in ("NA", "NAN") for v in row):
            raise NonFiniteInput(f"{path}:{lineno}: missing value")
    return header, rows


def read_dataset_csv(path, K: int | None = None) -> tuple[OrdinalDataset, list[str]]:
    """Load a dataset with an integer ``y`` column; other columns form X in file order.

    Returns the dataset and the covariate names.  ``K`` defaults to ``max(y)``.
    Zero-based coding is rejected rather than shifted.
    """
    header, rows = _read_csv(path)
    if "y" not in header:
        raise DimensionMismatch(f"{path}: no column named 'y'")
    j = header.index("y")
    names = [h for i, h in enumerate(header) if i != j]
    try:
        yv = np.array([float(r[j]) for r in rows])
        X = np.array([[float(v) for i, v in enumerate(r) if i != j] for r in rows]).reshape(len(rows), len(names))
    except ValueError as exc:
        raise NonFiniteInput(f"{path}: non-numeric value ({exc})") from None
    if yv.size and not np.all(np.mod(yv, 1) == 0):
        raise CategoryOutOfRange(f"{path}: y must hold integer categories")
    if yv.size and yv.min() < 1:
        raise CategoryOutOfRange(f"{path}: y must be coded 1..K (found {int(yv.min())})")
    if K is None:
        K = int(yv.max()) if yv.size else 2
    return OrdinalDataset(X, yv.astype(np.int64), K), names


def read_design_csv(path) -> tuple[np.ndarray, list[str]]:
    """Load a covariate-only CSV (a ``y`` column, if present, is ignored)."""
    header, rows = _read_csv(path)
    keep = [i for i, h in enumerate(header) if h != "y"]
    try:
        X = np.array([[float(r[i]) for i in keep] for r in rows]).reshape(len(rows), len(keep))
    except ValueError as exc:
        raise NonFiniteInput(f"{path}: non-numeric value ({exc})") from None
    return X, [header[i] for i in keep]
