"""Scalar special functions and SPD linear-algebra kernels.

The truncated-normal ratio functions

    zeta1(a, b) = [phi(b) - phi(a)] / [Phi(b) - Phi(a)]
    zeta2(a, b) = [b phi(b) - a phi(a)] / [Phi(b) - Phi(a)]

are evaluated by a single compiled kernel that also returns
log[Phi(b) - Phi(a)].  Intervals lying in one tail are reflected onto the
positive half-line and handled through the Mills ratio, so nothing
underflows even when both endpoints sit many standard deviations out.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import linalg, special

from .errors import DomainError, NotPositiveDefinite, SingularUpdate

__all__ = [
    "Interval",
    "norm_cdf",
    "log_norm_cdf",
    "norm_pdf",
    "zeta1",
    "zeta2",
    "trunc_terms",
    "tn_moments",
    "tn_sample",
    "rng_stream",
    "check_spd",
    "SpdFactor",
    "spd_factor_solve",
    "rank_one_inverse_update",
]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_SQRT_2PI = math.sqrt(2.0 * math.pi)
_SQRT1_2 = math.sqrt(0.5)
_INV_SQRT_2PI = 1.0 / _SQRT_2PI
_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)

SPD_SYM_RTOL = 1e-12
SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class Interval:
    """Truncation interval ``[lower, upper]``; endpoints may be infinite."""

    lower: float
    upper: float

    def __post_init__(self):
        if not (self.lower < self.upper):
            raise DomainError(f"empty interval [{self.lower}, {self.upper}]")


# ---------------------------------------------------------------------------
# compiled kernels


@njit(cache=True)
def _mills(x):
    # Q(x) / phi(x) for x >= 0
    if x < 25.0:
        return 0.5 * math.erfc(x * _SQRT1_2) * _SQRT_2PI * math.exp(0.5 * x * x)
    t = x
    for k in range(60, 0, -1):
        t = x + k / t
    return 1.0 / t


@njit(cache=True)
def _right_core(a, b):
    # 0 <= a < b <= inf; everything scaled by phi(a)
    inf = math.inf
    narrow = b < inf and (b - a) * max(1.0, b) < 0.05
    if b == inf:
        e = 0.0
        em1 = -1.0
        tail_b = 0.0
    else:
        d = 0.5 * (a - b) * (a + b)
        e = math.exp(d)
        em1 = math.expm1(d)
        tail_b = e * _mills(b)
    if narrow:
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        den = 0.0
        for j in range(_GL_X.shape[0]):
            t = mid + half * _GL_X[j]
            den += _GL_W[j] * math.exp(0.5 * (a - t) * (a + t))
        den *= half
    else:
        den = _mills(a) - tail_b
    log_z = -0.5 * a * a - _LOG_SQRT_2PI + math.log(den)
    z1 = em1 / den
    if b == inf:
        z2 = -a / den
    else:
        z2 = ((b - a) * e + a * em1) / den
    return log_z, z1, z2


@njit(cache=True)
def _core(a, b):
    """(log Z, zeta1, zeta2) for a valid interval a < b."""
    inf = math.inf
    if a >= 0.0:
        return _right_core(a, b)
    if b <= 0.0:
        log_z, z1, z2 = _right_core(-b, -a)
        return log_z, -z1, z2
    if a == -inf and b == inf:
        return 0.0, 0.0, 0.0
    # a < 0 < b: erf terms have opposite signs, no cancellation
    z = 0.5 * (math.erf(b * _SQRT1_2) - math.erf(a * _SQRT1_2))
    ea = 0.0 if a == -inf else math.expm1(-0.5 * a * a)
    eb = 0.0 if b == inf else math.expm1(-0.5 * b * b)
    pa = 0.0 if a == -inf else _INV_SQRT_2PI * (1.0 + ea)
    pb = 0.0 if b == inf else _INV_SQRT_2PI * (1.0 + eb)
    if a == -inf:
        num1 = pb
    elif b == inf:
        num1 = -pa
    else:
        num1 = _INV_SQRT_2PI * (eb - ea)
    num2 = (0.0 if b == inf else b * pb) - (0.0 if a == -inf else a * pa)
    return math.log(z), num1 / z, num2 / z


@njit(cache=True)
def _core_vec(a, b, log_z, z1, z2):
    for i in range(a.shape[0]):
        log_z[i], z1[i], z2[i] = _core(a[i], b[i])


# ---------------------------------------------------------------------------
# public scalar/vector functions


def norm_cdf(x):
    """Standard normal CDF (scipy's ``ndtr``)."""
    return special.ndtr(x)


def log_norm_cdf(x):
    """log Phi(x), accurate deep in the lower tail."""
    return special.log_ndtr(x)


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.isinf(x), 0.0, np.exp(-0.5 * x * x) * _INV_SQRT_2PI)


def _check_interval(a, b):
    if np.any(np.isnan(a)) or np.any(np.isnan(b)) or np.any(~(a < b)):
        raise DomainError("truncation interval requires lower < upper")


def trunc_terms(a, b):
    """Return ``(log Z, zeta1, zeta2)`` for standardized intervals ``[a, b]``.

    Inputs broadcast; ``Z = Phi(b) - Phi(a)``.  Raises :class:`DomainError`
    unless ``a < b`` elementwise.
    """
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    _check_interval(a, b)
    shape = a.shape
    af = np.ascontiguousarray(a).ravel()
    bf = np.ascontiguousarray(b).ravel()
    out = [np.empty_like(af) for _ in range(3)]
    _core_vec(af, bf, *out)
    if shape == ():
        return tuple(float(o[0]) for o in out)
    return tuple(o.reshape(shape) for o in out)


def zeta1(a, b):
    return trunc_terms(a, b)[1]


def zeta2(a, b):
    return trunc_terms(a, b)[2]


def tn_moments(lower, upper, loc=0.0, scale=1.0):
    """Mean and variance of N(loc, scale^2) truncated to ``[lower, upper]``.

    ``lower`` may also be an :class:`Interval`, in which case ``upper`` is
    read as the location and ``loc`` as the scale.
    """
    if isinstance(lower, Interval):
        lower, upper, loc, scale = lower.lower, lower.upper, upper, loc
    loc = np.asarray(loc, dtype=float)
    scale = np.asarray(scale, dtype=float)
    if np.any(~(scale > 0)):
        raise DomainError("scale must be positive")
    _check_interval(np.asarray(lower, dtype=float), np.asarray(upper, dtype=float))
    a = (lower - loc) / scale
    b = (upper - loc) / scale
    _, z1, z2 = trunc_terms(a, b)
    var_factor = 1.0 - z1 * z1 - z2
    a, b, var_factor = np.broadcast_arrays(a, b, var_factor)
    near = np.minimum(np.abs(a), np.abs(b))
    near = np.where((a < 0) & (b > 0), 0.0, near)
    narrow = (b - a) * np.maximum(1.0, near) <= 1.0
    if np.any(narrow):
        # 1 - zeta1^2 - zeta2 cancels badly when a short interval sits far out
        var_factor = np.array(var_factor, dtype=float)
        var_factor[narrow] = _narrow_var(a[narrow], b[narrow])
    var_factor = np.clip(var_factor, np.finfo(float).tiny, 1.0)
    out = loc - scale * z1, scale * scale * var_factor
    return tuple(float(o) for o in out) if np.ndim(out[0]) == 0 and np.ndim(out[1]) == 0 else out


def _narrow_var(a, b):
    """Variance of N(0,1) on short intervals by Gauss-Legendre on the density ratio."""
    flip = b <= 0.0
    lo = np.where(flip, -b, a)[:, None]
    hi = np.where(flip, -a, b)[:, None]
    c = np.maximum(lo, 0.0)
    half = 0.5 * (hi - lo)
    t = lo + half * (_GL_X[None, :] + 1.0)
    w = _GL_W[None, :] * np.exp(-0.5 * (t - c) * (t + c))
    mean = np.sum(w * t, axis=1, keepdims=True) / np.sum(w, axis=1, keepdims=True)
    return np.sum(w * (t - mean) ** 2, axis=1) / np.sum(w, axis=1)


# ---------------------------------------------------------------------------
# sampling


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent, reproducible generator for ``(seed, stream)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(ss))


def _sample_std(a, b, u):
    # inverse-CDF draw from N(0,1) on [a, b]; reflected so that the
    # one-sided case always works in upper-tail log probabilities
    out = np.empty_like(u)
    flip = b <= 0.0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    tail = lo >= 0.0
    if np.any(tail):
        la, lb = lo[tail], hi[tail]
        log_qa = special.log_ndtr(-la)
        log_qb = special.log_ndtr(-lb)
        ratio = np.exp(log_qb - log_qa)
        log_q = log_qa + np.log1p(-u[tail] * (1.0 - ratio))
        x = -special.ndtri_exp(log_q)
        out[tail] = np.where(flip[tail], -x, x)
    mixed = ~tail
    if np.any(mixed):
        pa = special.ndtr(lo[mixed])
        pb = special.ndtr(hi[mixed])
        x = special.ndtri(pa + u[mixed] * (pb - pa))
        out[mixed] = x
    # keep draws strictly inside the interval despite rounding
    out = np.where(out <= a, np.nextafter(a, b), out)
    out = np.where(out >= b, np.nextafter(b, a), out)
    return out


def tn_sample(lower, upper, loc, scale, rng: np.random.Generator, size=None):
    """Draw from N(loc, scale^2) truncated to ``[lower, upper]``.

    Vectorized over broadcast parameters.  Uses the inverse CDF computed
    in log space on the upper tail, so intervals far in either tail are
    sampled in constant time.
    """
    lower, upper, loc, scale = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (lower, upper, loc, scale))
    )
    if size is not None:
        shape = np.broadcast_shapes(np.shape(lower), size if isinstance(size, tuple) else (size,))
        lower, upper, loc, scale = (np.broadcast_to(v, shape) for v in (lower, upper, loc, scale))
    _check_interval(lower, upper)
    if np.any(~(scale > 0)):
        raise DomainError("scale must be positive")
    a = ((lower - loc) / scale).ravel()
    b = ((upper - loc) / scale).ravel()
    u = rng.random(a.shape[0])
    z = _sample_std(a, b, u).reshape(lower.shape)
    x = loc + scale * z
    x = np.where(x <= lower, np.nextafter(lower, upper), x)
    x = np.where(x >= upper, np.nextafter(upper, lower), x)
    return x if x.shape else float(x)


# ---------------------------------------------------------------------------
# SPD linear algebra


def check_spd(A, name="matrix") -> np.ndarray:
    """Return ``A`` as a float array after checking it is square and symmetric."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotPositiveDefinite(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NotPositiveDefinite(f"{name} has non-finite entries")
    scale = max(np.max(np.abs(A)), 1.0) if A.size else 1.0
    if np.max(np.abs(A - A.T), initial=0.0) > SPD_SYM_RTOL * scale:
        raise NotPositiveDefinite(f"{name} is not symmetric")
    return A


class SpdFactor:
    """Cholesky factorization of an SPD matrix (lower triangular)."""

    def __init__(self, A, name="matrix"):
        A = check_spd(A, name)
        try:
            self.L = linalg.cholesky(A, lower=True)
        except linalg.LinAlgError as exc:
            raise NotPositiveDefinite(f"{name} is not positive definite") from exc
        if np.any(np.diag(self.L) <= 0):
            raise NotPositiveDefinite(f"{name} is not positive definite")
        self.dim = A.shape[0]

    def solve(self, B):
        return linalg.cho_solve((self.L, True), B)

    def inverse(self):
        inv = self.solve(np.eye(self.dim))
        return 0.5 * (inv + inv.T)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.L))))

    def solve_lower(self, B):
        return linalg.solve_triangular(self.L, B, lower=True)


def spd_factor_solve(A, B):
    """``A^{-1} B`` through a Cholesky factorization of ``A``."""
    return SpdFactor(A).solve(B)


def rank_one_inverse_update(Ainv, x, c):
    """Sherman-Morrison: ``(A + c x x')^{-1}`` given ``A^{-1}``."""
    Ainv = np.asarray(Ainv, dtype=float)
    x = np.asarray(x, dtype=float)
    u = Ainv @ x
    denom = 1.0 + c * float(x @ u)
    if abs(denom) < SINGULAR_TOL:
        raise SingularUpdate(f"rank-one update denominator {denom:.3e}")
    out = Ainv - (c / denom) * np.outer(u, u)
    return 0.5 * (out + out.T)
