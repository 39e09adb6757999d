"""Critical thresholds controlling the per-coefficient false positive rate.

Thresholds are computed in count units ``m = 2^(c j q) t`` where the null
coefficient is ``2^(-c j q) (X1 - X2)`` with ``X1, X2 ~ P(lambda_j / 2)``.
Two approximations of the Haar tail are supported:

* CLTB: Patnaik's central chi-square approximation followed by a normal one,
  which has a closed form.
* FAB: Fisher's ``sqrt(2 chi^2)`` approximation, whose threshold is the unique
  feasible root of ``G(m) = z``.  ``G`` is strictly increasing above the
  feasibility bound, so the root is bracketed and bisected; the quartic
  obtained by squaring is kept as an independent cross-check.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DomainError
from .special import normal_quantile

__all__ = [
    "PatnaikApprox",
    "ThresholdSpec",
    "CriticalCountTable",
    "cltb_threshold",
    "cltb_m",
    "fab_G",
    "fab_feasible_lower_bound",
    "fab_solve_m",
    "fab_quartic_coefficients",
    "fab_quartic_roots",
    "fab_threshold",
    "solve_quartic",
    "universal_z",
    "integerize_threshold",
    "critical_table",
    "lattice_weight",
    "lattice_statistic",
    "lattice_keep",
    "lattice_integer_stat",
]

METHODS = ("cltb", "fab")


@dataclass(frozen=True)
class PatnaikApprox:
    """Central chi-square surrogate ``gamma * chi2_f`` for ``chi2_(2m)(lambda)``."""

    gamma: float
    f: float

    @classmethod
    def from_m(cls, m, lambda_j):
        s = 2.0 * m + lambda_j
        return cls(gamma=(2.0 * m + 2.0 * lambda_j) / s, f=s * s / (2.0 * m + 2.0 * lambda_j))


def _check_z(z):
    if not np.all(np.asarray(z) > 0):
        raise DomainError(f"critical value z must be > 0, got {z!r}")


def _check_lambda(lam):
    if not np.all(np.asarray(lam) >= 0):
        raise DomainError("lambda_j must be >= 0")


def _scalar_or_array(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def cltb_m(lambda_j, z):
    """CLTB threshold in count units (``c = 0``)."""
    _check_z(z)
    _check_lambda(lambda_j)
    lam = np.asarray(lambda_j, dtype=float)
    z2 = z * z
    return _scalar_or_array(0.5 * (z2 + np.sqrt(z2 * z2 + 4.0 * lam * z2)))


def cltb_threshold(lambda_j, z, c=0.0, j=1, q=1):
    """CLTB threshold ``2^(-c j q - 1) (z^2 + sqrt(z^4 + 4 lambda_j z^2))``."""
    return _scalar_or_array(2.0 ** (-c * j * q) * np.asarray(cltb_m(lambda_j, z)))


def fab_G(m, lambda_j):
    """Fisher-approximation statistic ``sqrt(2f - 1) - sqrt(2 lambda_j / gamma)``."""
    m = np.asarray(m, dtype=float)
    lam = np.asarray(lambda_j, dtype=float)
    s = 2.0 * m + lam
    t = m + lam
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.sqrt(np.maximum(s * s / t - 1.0, 0.0)) - np.sqrt(lam * s / t)
    return _scalar_or_array(out)


def fab_feasible_lower_bound(lambda_j, z):
    """Smallest ``m`` for which ``G(m) = z`` can hold."""
    lam = np.asarray(lambda_j, dtype=float)
    z2 = z * z
    rad = np.sqrt(z2 * z2 + (12.0 * lam + 2.0) * z2 + 4.0 * lam * lam + 12.0 * lam + 1.0)
    return _scalar_or_array((z2 - 2.0 * lam + 1.0 + rad) / 8.0)


def fab_solve_m(lambda_j, z, max_iter=200):
    """Unique feasible solution ``m*`` of ``G(m) = z`` (vectorised over ``lambda_j``).

    ``lambda_j = 0`` returns the closed form ``(z^2 + 1) / 4``.
    """
    _check_z(z)
    _check_lambda(lambda_j)
    lam = np.atleast_1d(np.asarray(lambda_j, dtype=float))
    out = np.empty_like(lam)
    zero = lam == 0
    out[zero] = (z * z + 1.0) / 4.0
    if np.any(~zero):
        lv = lam[~zero]
        lo = np.asarray(fab_feasible_lower_bound(lv, z), dtype=float).copy()
        hi = 2.0 * lo + 1.0
        while True:
            short = fab_G(hi, lv) < z
            if not np.any(short):
                break
            lo = np.where(short, hi, lo)
            hi = np.where(short, 2.0 * hi, hi)
        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            below = fab_G(mid, lv) < z
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 4e-16 * hi):
                break
        out[~zero] = hi
    if np.ndim(lambda_j) == 0:
        return float(out[0])
    return out.reshape(np.shape(lambda_j))


def fab_quartic_coefficients(lambda_j, z):
    """Coefficients (highest degree first) of the quartic obtained by squaring ``G(m) = z`` twice."""
    lam = float(lambda_j)
    z2 = z * z
    w = (z2 + 1.0) ** 2
    return (
        16.0,
        16.0 * lam - 8.0 * (z2 + 1.0),
        w - (20.0 * z2 + 12.0) * lam + 4.0 * lam * lam,
        2.0 * w * lam - 16.0 * z2 * lam * lam - 4.0 * lam * lam,
        w * lam * lam - 4.0 * z2 * lam ** 3,
    )


def _cubic_max_real_root(a2, a1, a0):
    # Largest real root of t^3 + a2 t^2 + a1 t + a0.
    p = a1 - a2 * a2 / 3.0
    q = 2.0 * a2 ** 3 / 27.0 - a2 * a1 / 3.0 + a0
    shift = -a2 / 3.0
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if disc > 0:
        sq = math.sqrt(disc)
        t = math.copysign(abs(-q / 2.0 + sq) ** (1.0 / 3.0), -q / 2.0 + sq)
        u = math.copysign(abs(-q / 2.0 - sq) ** (1.0 / 3.0), -q / 2.0 - sq)
        root = t + u + shift
    elif p == 0:
        root = shift
    else:
        rho = 2.0 * math.sqrt(-p / 3.0)
        arg = max(-1.0, min(1.0, 3.0 * q / (p * rho)))
        root = rho * math.cos(math.acos(arg) / 3.0) + shift
    for _ in range(4):
        f = ((root + a2) * root + a1) * root + a0
        df = (3.0 * root + 2.0 * a2) * root + a1
        if df == 0:
            break
        step = f / df
        root -= step
        if abs(step) <= 1e-16 * max(1.0, abs(root)):
            break
    return root


def _polish(coeffs, x, iters=8):
    for _ in range(iters):
        f = 0j
        df = 0j
        for a in coeffs:
            df = df * x + f
            f = f * x + a
        if df == 0:
            break
        step = f / df
        x = x - step
        if abs(step) <= 1e-16 * max(1.0, abs(x)):
            break
    return x


def solve_quartic(coeffs):
    """All four complex roots of ``a x^4 + b x^3 + c x^2 + d x + e`` (Ferrari).

    Roots are polished with a few Newton steps on the original polynomial.
    """
    a, b, c, d, e = (float(v) for v in coeffs)
    if a == 0:
        raise DomainError("leading coefficient must be nonzero")
    b, c, d, e = b / a, c / a, d / a, e / a
    p = c - 3.0 * b * b / 8.0
    q = d - b * c / 2.0 + b ** 3 / 8.0
    r = e - b * d / 4.0 + b * b * c / 16.0 - 3.0 * b ** 4 / 256.0
    scale = max(1.0, abs(p), abs(r) ** 0.5)
    if abs(q) <= 1e-14 * scale ** 1.5:
        disc = cmath.sqrt(p * p - 4.0 * r)
        ys = []
        for y2 in ((-p + disc) / 2.0, (-p - disc) / 2.0):
            s = cmath.sqrt(y2)
            ys += [s, -s]
    else:
        s = _cubic_max_real_root(p, p * p / 4.0 - r, -q * q / 8.0)
        s = max(s, 1e-300)
        sq = math.sqrt(2.0 * s)
        ys = []
        for sign in (1.0, -1.0):
            bb = -sign * sq
            cc = p / 2.0 + s + sign * q / (2.0 * sq)
            disc = cmath.sqrt(bb * bb - 4.0 * cc)
            ys += [(-bb + disc) / 2.0, (-bb - disc) / 2.0]
    monic = (1.0, b, c, d, e)
    return [_polish(monic, complex(y - b / 4.0)) for y in ys]


def fab_quartic_roots(lambda_j, z, imag_tol=1e-7):
    """Real roots of the FAB quartic, ascending.

    Solved in the scaled variable ``u = m / (1 + lambda_j)``; complex pairs are
    dropped.  For ``lambda_j = 0`` the factored form ``m^2 (4m - z^2 - 1)^2``
    gives ``[0, 0, (z^2+1)/4, (z^2+1)/4]`` directly.
    """
    _check_z(z)
    _check_lambda(lambda_j)
    lam = float(lambda_j)
    if lam == 0:
        m0 = (z * z + 1.0) / 4.0
        return [0.0, 0.0, m0, m0]
    s = 1.0 + lam
    coeffs = fab_quartic_coefficients(lam, z)
    scaled = [a * s ** (4 - i) for i, a in enumerate(coeffs)]
    norm = max(abs(v) for v in scaled)
    scaled = [v / norm for v in scaled]
    roots = []
    for u in solve_quartic(scaled):
        if abs(u.imag) <= imag_tol * max(1.0, abs(u.real)):
            u = _polish(scaled, complex(u.real, 0.0)).real
            roots.append(u * s)
    return sorted(roots)


def fab_feasible_root(lambda_j, z, tol=1e-8):
    """The quartic root that satisfies the feasibility bound and ``G(m) = z``."""
    lb = fab_feasible_lower_bound(lambda_j, z)
    cands = [m for m in fab_quartic_roots(lambda_j, z)
             if m >= lb * (1 - tol) - tol and abs(fab_G(m, lambda_j) - z) <= tol * max(1.0, z)]
    return cands


def fab_threshold(lambda_j, z, c=0.0, j=1, q=1):
    """FAB threshold ``t_j = 2^(-c j q) m*``."""
    return _scalar_or_array(2.0 ** (-c * j * q) * np.asarray(fab_solve_m(lambda_j, z)))


def universal_z(N_j):
    """Universal critical value ``sqrt(2 ln N_j)``."""
    if N_j < 2:
        raise DomainError(f"N_j must be >= 2, got {N_j!r}")
    return math.sqrt(2.0 * math.log(N_j))


def integerize_threshold(t_j, c=0.0, j=1, q=1):
    """Round ``t_j`` up onto the coefficient lattice: ``2^(-cjq) ceil(2^(cjq) t_j)``."""
    t = np.asarray(t_j, dtype=float)
    if not np.all(t > 0):
        raise DomainError(f"t_j must be > 0, got {t_j!r}")
    k = 2.0 ** (c * j * q)
    return _scalar_or_array(np.ceil(k * t) / k)


# ----------------------------------------------------------------------------
# per-location critical counts


class CriticalCountTable:
    """Integer critical counts ``k0(lambda) = ceil(m*(lambda))`` by breakpoint lookup.

    ``m*`` is increasing in ``lambda``, so ``k0`` is a step function with
    breakpoints ``Lambda_k`` solving ``m*(Lambda_k) = k``.  Lookups are a
    ``searchsorted`` over those breakpoints.
    """

    def __init__(self, method, z):
        if method not in METHODS:
            raise DomainError(f"unknown threshold method {method!r}")
        _check_z(z)
        self.method = method
        self.z = float(z)
        self.k_min = int(math.ceil(self.m_star(0.0)))
        self.breaks = np.empty(0)

    def m_star(self, lam):
        if self.method == "cltb":
            return cltb_m(lam, self.z)
        return fab_solve_m(lam, self.z)

    def _extend(self, k_max):
        have = self.k_min + self.breaks.size - 1
        if k_max <= have:
            return
        ks = np.arange(have + 1, k_max + 1, dtype=float)
        if self.method == "cltb":
            z2 = self.z * self.z
            new = np.maximum(ks * (ks - z2) / z2, 0.0)
        else:
            new = self._fab_breaks(ks)
        self.breaks = np.concatenate([self.breaks, new])

    def _fab_breaks(self, ks):
        lo = np.zeros_like(ks)
        hi = np.ones_like(ks)
        while True:
            short = fab_solve_m(hi, self.z) < ks
            if not np.any(short):
                break
            lo = np.where(short, hi, lo)
            hi = np.where(short, 2.0 * hi, hi)
        at_zero = fab_solve_m(0.0, self.z) >= ks
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = fab_solve_m(mid, self.z) < ks
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 4e-16 * np.maximum(hi, 1.0)):
                break
        return np.where(at_zero, 0.0, hi)

    def lookup(self, lam):
        lam = np.maximum(np.asarray(lam, dtype=float), 0.0)
        if lam.size == 0:
            return lam.astype(np.int64)
        top = float(lam.max())
        k_needed = int(math.ceil(float(self.m_star(top)))) + 1
        self._extend(max(k_needed, self.k_min))
        return self.k_min + np.searchsorted(self.breaks, lam, side="left")


@lru_cache(maxsize=64)
def critical_table(method, z):
    """Shared lookup table per ``(method, z)``."""
    return CriticalCountTable(method, z)


@dataclass
class ThresholdSpec:
    """Threshold configuration for one test family.

    ``scales`` is filled in by the denoiser with per-band summaries
    (``t_j`` / ``t~_j`` at the median estimated intensity).
    """

    method: str
    alpha: float
    z: float
    c: float = 0.0
    q: int = 1
    universal: bool = False
    scales: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise DomainError(f"unknown threshold method {self.method!r}")
        _check_z(self.z)

    @classmethod
    def from_alpha(cls, method, alpha, c=0.0, q=1):
        if not 0.0 < alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
        return cls(method, alpha, normal_quantile(1.0 - alpha / 2.0), c, q)

    @classmethod
    def from_band_size(cls, method, N_j, c=0.0, q=1):
        return cls(method, float("nan"), universal_z(N_j), c, q, universal=True)

    def m_star(self, lambda_j):
        if self.method == "cltb":
            return cltb_m(lambda_j, self.z)
        return fab_solve_m(lambda_j, self.z)

    def threshold(self, lambda_j, j=1):
        return _scalar_or_array(2.0 ** (-self.c * j * self.q) * np.asarray(self.m_star(lambda_j)))

    def integerized(self, lambda_j, j=1):
        return integerize_threshold(self.threshold(lambda_j, j), self.c, j, self.q)

    def critical_count(self, lambda_j):
        """Integer critical count ``k0 = ceil(m*)`` per location."""
        return critical_table(self.method, self.z).lookup(lambda_j)


# ----------------------------------------------------------------------------
# lattice tests


def lattice_weight(r=1.0, n_highpass=1):
    """Factor mapping count-unit magnitudes onto the integer lattice of a band.

    Haar coefficients are integers in count units.  A Bi-Haar band filtered by
    ``p`` highpass stages lives on ``(r/8)^p Z``.
    """
    if r == 1.0:
        return 1.0
    return (8.0 / r) ** n_highpass


def lattice_statistic(d, scale=1.0, r=1.0, n_highpass=1):
    """Integer statistic ``round(w * scale * |d|)`` with ``w`` from :func:`lattice_weight`."""
    w = lattice_weight(r, n_highpass)
    return np.rint(np.abs(np.asarray(d, dtype=float)) * scale * w)


def lattice_keep(d, k0, scale=1.0, r=1.0, n_highpass=1):
    """Keep mask for ``|d| >= 2^(-cL) k0`` evaluated on the integer lattice.

    For Bi-Haar this is ``round(w 2^(cL) |d|) >= ceil(w k0)`` with ``w = (8/r)^p``.
    """
    w = lattice_weight(r, n_highpass)
    stat = lattice_statistic(d, scale, r, n_highpass)
    crit = np.asarray(k0, dtype=float) if w == 1.0 else np.ceil(np.asarray(k0) * w)
    return stat >= crit


def lattice_integer_stat(d, scale=1.0, r=1.0, n_highpass=1):
    """Largest integer ``k`` such that :func:`lattice_keep` passes at ``k0 = k``."""
    w = lattice_weight(r, n_highpass)
    stat = lattice_statistic(d, scale, r, n_highpass)
    if w == 1.0:
        return stat.astype(np.int64)
    return np.floor(stat / w).astype(np.int64)
