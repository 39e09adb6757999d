"""Scaled modified Bessel functions, the Skellam law and normal-distribution helpers.

Every null distribution used by the tests is a Skellam law (difference of two
independent Poisson counts), whose mass function is an exponentially scaled
modified Bessel function of the first kind.  All values are returned in linear
scale; the smallest probabilities the package needs sit far above underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from statistics import NormalDist

import numpy as np

from .errors import DomainError

__all__ = [
    "SkellamParams",
    "bessel_i_scaled",
    "bessel_i_scaled_table",
    "skellam_pmf",
    "skellam_pmf_table",
    "skellam_tail",
    "symmetric_tails",
    "normal_quantile",
    "normal_sf",
]

# Regime switches for bessel_i_scaled.
_SERIES_MAX_ORDER = 200
_HANKEL_MIN_X = 50.0
_HANKEL_ORDER_FACTOR = 30.0
_RESCALE = 1e250

_TAIL_RTOL = 1e-15

_STD_NORMAL = NormalDist()


@dataclass(frozen=True)
class SkellamParams:
    """Means of the two Poisson variables in ``X1 - X2``."""

    mu1: float
    mu2: float

    def __post_init__(self):
        for name in ("mu1", "mu2"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise DomainError(f"{name} must be finite and >= 0, got {v!r}")

    @classmethod
    def symmetric(cls, lam):
        return cls(float(lam), float(lam))

    @property
    def is_symmetric(self):
        return self.mu1 == self.mu2


def _check_bessel_args(n, x):
    if n < 0 or int(n) != n:
        raise DomainError(f"Bessel order must be a nonnegative integer, got {n!r}")
    if not x >= 0:
        raise DomainError(f"Bessel argument must be >= 0, got {x!r}")


def _series(n, x):
    # e^{-x} (x/2)^n / n! * sum_k (x^2/4)^k / (k! (n+1)_k); all terms positive.
    q = 0.25 * x * x
    term = 1.0
    total = 1.0
    k = 0
    while True:
        k += 1
        term *= q / (k * (n + k))
        total += term
        if term < 1e-17 * total:
            break
    # (x/2)^n / n! as a running product: exp(log(...)) loses ~|log| ulps.
    half = 0.5 * x
    pre = math.exp(-x)
    for k in range(1, n + 1):
        pre *= half / k
    return pre * total


def _hankel(n, x):
    # Large-argument expansion; valid here because x >> n^2.
    mu = 4.0 * n * n
    term = 1.0
    total = 1.0
    k = 0
    while True:
        k += 1
        term *= -(mu - (2 * k - 1) ** 2) / (8.0 * k * x)
        total += term
        if abs(term) < 1e-17 * abs(total) or k > 60:
            break
    return total / math.sqrt(2.0 * math.pi * x)


def bessel_i_scaled_table(nmax, x):
    """Return ``exp(-x) * I_k(x)`` for ``k = 0..nmax`` as a float array.

    Miller's backward recurrence started well above both ``nmax`` and the
    bulk of the order distribution, normalised with
    ``exp(-x) * (I_0(x) + 2 * sum_{k>=1} I_k(x)) = 1``.  Values that fall
    below the double-precision range come back as 0.
    """
    _check_bessel_args(nmax, x)
    nmax = int(nmax)
    out = np.zeros(nmax + 1)
    if x == 0:
        out[0] = 1.0
        return out
    top = nmax + int(10.0 * math.sqrt(x)) + 40
    two_over_x = 2.0 / x
    i_next = 0.0
    i_cur = 1e-280
    total = 0.0
    for k in range(top, 0, -1):
        if k <= nmax:
            out[k] = i_cur
        total += i_cur
        i_prev = i_next + k * two_over_x * i_cur
        i_next, i_cur = i_cur, i_prev
        if i_cur > _RESCALE:
            i_cur /= _RESCALE
            i_next /= _RESCALE
            total /= _RESCALE
            out[k:] /= _RESCALE
    out[0] = i_cur
    norm = i_cur + 2.0 * total
    return out / norm


def bessel_i_scaled(n, x):
    """Exponentially scaled modified Bessel function ``exp(-x) * I_n(x)``.

    Parameters
    ----------
    n : int
        Nonnegative integer order.
    x : float
        Nonnegative argument.  Scaling keeps the result finite up to very large
        ``x`` (``I_n`` itself overflows near ``x = 710``).
    """
    _check_bessel_args(n, x)
    n = int(n)
    x = float(x)
    if x == 0.0:
        return 1.0 if n == 0 else 0.0
    if n <= _SERIES_MAX_ORDER and x * x <= 4.0 * (n + 1):
        return _series(n, x)
    if x >= _HANKEL_MIN_X and x >= _HANKEL_ORDER_FACTOR * (n * n + 1):
        return _hankel(n, x)
    return float(bessel_i_scaled_table(n, x)[n])


def _poisson_pmf(k, mu):
    if mu == 0:
        return 1.0 if k == 0 else 0.0
    if k < 0:
        return 0.0
    return math.exp(k * math.log(mu) - mu - math.lgamma(k + 1))


def _asymmetric_pmf(n, mu1, mu2):
    if mu2 == 0:
        return _poisson_pmf(n, mu1)
    if mu1 == 0:
        return _poisson_pmf(-n, mu2)
    x = 2.0 * math.sqrt(mu1 * mu2)
    ive = bessel_i_scaled(abs(n), x)
    if ive > 0:
        log_p = (math.log(ive) - (math.sqrt(mu1) - math.sqrt(mu2)) ** 2
                 + 0.5 * n * math.log(mu1 / mu2))
        return math.exp(log_p)
    # Bessel factor underflowed: sum the Poisson convolution directly.
    total = 0.0
    k = max(0, -n)
    while True:
        term = _poisson_pmf(n + k, mu1) * _poisson_pmf(k, mu2)
        total += term
        if k > mu2 and term < _TAIL_RTOL * total:
            break
        if k > mu2 + 50 and total == 0.0:
            break
        k += 1
    return total


def skellam_pmf(n, params):
    """``Pr(X1 - X2 = n)`` for independent ``X1 ~ P(mu1)``, ``X2 ~ P(mu2)``."""
    n = int(n)
    if params.is_symmetric:
        return bessel_i_scaled(abs(n), 2.0 * params.mu1)
    return _asymmetric_pmf(n, params.mu1, params.mu2)


@lru_cache(maxsize=256)
def _symmetric_pmf_table(lam, nmax):
    table = bessel_i_scaled_table(nmax, 2.0 * lam)
    table.setflags(write=False)
    return table


def skellam_pmf_table(lam, nmax):
    """Symmetric Skellam masses ``Pr(X1 - X2 = k)``, ``k = 0..nmax``, with both means ``lam``.

    The returned array is read-only and cached.
    """
    if not lam >= 0:
        raise DomainError(f"lam must be >= 0, got {lam!r}")
    return _symmetric_pmf_table(float(lam), int(nmax))


def skellam_tail(k0, params):
    """Upper tail ``Pr(X1 - X2 >= k0)`` for ``k0 >= 1``.

    The series is summed from ``k0`` upward and stops once a term drops below
    ``1e-15`` of the running sum past ``mu1 + mu2``, where terms decay
    geometrically.
    """
    if k0 < 1 or int(k0) != k0:
        raise DomainError(f"k0 must be an integer >= 1, got {k0!r}")
    k0 = int(k0)
    mu1, mu2 = params.mu1, params.mu2
    if mu1 == 0:
        return 0.0
    spread = mu1 + mu2
    if params.is_symmetric:
        nmax = max(k0, int(math.ceil(spread))) + 32 + int(8.0 * math.sqrt(spread))
        while True:
            table = skellam_pmf_table(mu1, nmax)
            total = 0.0
            done = False
            for n in range(k0, nmax + 1):
                term = table[n]
                total += term
                if n > spread and (term < _TAIL_RTOL * total or term == 0.0):
                    done = True
                    break
            if done:
                return total
            nmax *= 2
    total = 0.0
    n = k0
    while True:
        term = _asymmetric_pmf(n, mu1, mu2)
        total += term
        if n > spread and (term < _TAIL_RTOL * total or term == 0.0):
            return total
        n += 1


def symmetric_tails(ks, lam):
    """``Pr(X1 - X2 >= k)`` for every ``k`` in ``ks`` with both means equal to ``lam``.

    One pmf table serves all ``k``; tails are reverse cumulative sums of
    positive terms, so tiny tails keep their relative accuracy.
    """
    ks = np.asarray(ks, dtype=np.int64)
    if ks.size == 0:
        return np.zeros(0)
    if np.any(ks < 1):
        raise DomainError("every k0 must be >= 1")
    if lam == 0:
        return np.zeros(ks.shape)
    spread = 2.0 * lam
    nmax = int(ks.max()) + int(math.ceil(spread)) + 40 + int(10.0 * math.sqrt(spread))
    table = np.asarray(skellam_pmf_table(lam, nmax))
    tails = np.cumsum(table[::-1])[::-1]
    return tails[ks]


def normal_quantile(p):
    """Standard normal quantile ``Phi^{-1}(p)`` for ``0 < p < 1``."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p!r}")
    return _STD_NORMAL.inv_cdf(p)


def normal_sf(x):
    """Standard normal survival function ``1 - Phi(x)``."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))
