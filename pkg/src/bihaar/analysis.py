"""Exact null p-values, Haar/Bi-Haar bounds, simulation generators and metrics."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .denoise import DenoiseConfig, denoise
from .errors import DomainError
from .special import SkellamParams, skellam_pmf_table, skellam_tail, symmetric_tails
from .transforms import BIHAAR_R, pad_to_scales

__all__ = [
    "PValuePair",
    "ExperimentSpec",
    "BoundReport",
    "PVALUE_GRID",
    "p_haar",
    "p_bihaar_exact",
    "p_bihaar_many",
    "bound_A",
    "bound_B",
    "bound_B_residual",
    "verify_prop1",
    "pvalue_table",
    "nmise",
    "gen_smooth",
    "amplitude_schedule",
    "gen_hyperspectral",
    "source_mask",
    "flux",
    "flux_loss",
    "sample_poisson",
    "run_nmise_benchmark",
    "run_flux_benchmark",
    "run_speed_benchmark",
]

# Default (lambda_j, k0) grid of the Haar vs Bi-Haar p-value table.
PVALUE_GRID = (
    (0.1, (2, 3, 4)),
    (1.0, (4, 5, 6)),
    (10.0, (9, 12, 15)),
    (100.0, (20, 30, 40)),
)

_OUTER_MASS_TOL = 1e-14


@dataclass(frozen=True)
class PValuePair:
    lambda_j: float
    k0: int
    p_H: float
    p_BH: float


@dataclass
class ExperimentSpec:
    generator: str
    peak: float = 1.0
    dims: tuple = (1024,)
    amplitude_range: tuple = (2.0, 1e-4)
    sigma: float = 4.0
    background: float = 0.05
    replicates: int = 1
    seed: int = 0

    def __post_init__(self):
        if any(int(d) != d or d < 1 for d in self.dims):
            raise DomainError(f"dims must be positive integers, got {self.dims!r}")
        if self.replicates < 1:
            raise DomainError("replicates must be >= 1")


# ----------------------------------------------------------------------------
# exact p-values


def _check_k0(k0):
    if int(k0) != k0 or k0 < 1:
        raise DomainError(f"k0 must be an integer >= 1, got {k0!r}")


def p_haar(k0, lambda_j):
    """Haar null tail ``Pr(X1 - X2 >= k0)`` with ``X1, X2 ~ P(lambda_j / 2)``."""
    _check_k0(k0)
    if lambda_j < 0:
        raise DomainError(f"lambda_j must be >= 0, got {lambda_j!r}")
    return skellam_tail(int(k0), SkellamParams.symmetric(lambda_j / 2.0))


def _upper_tail_fn(tails):
    # Pr(S >= n) for any integer n, from tails[m] = Pr(S >= m), m >= 0.
    def fn(n):
        n = np.asarray(n)
        pos = np.clip(n, 0, tails.size - 1)
        neg = np.clip(1 - n, 0, tails.size - 1)
        return np.where(n >= 1, tails[pos], 1.0 - tails[neg])
    return fn


def _sym_tails(lam, nmax):
    spread = 2.0 * lam
    n = nmax + int(math.ceil(spread)) + 40 + int(10.0 * math.sqrt(spread))
    pmf = np.asarray(skellam_pmf_table(lam, n))
    tails = np.cumsum(pmf[::-1])[::-1]
    return pmf, tails


@lru_cache(maxsize=512)
def _outer_reach(lam):
    # Smallest K with Pr(|S| > K) < tolerance for S ~ Skellam(lam, lam).
    if lam == 0:
        return 0
    K = int(math.ceil(2.0 * lam + 10.0 * math.sqrt(2.0 * lam))) + 20
    pmf, tails = _sym_tails(lam, K)
    k = 0
    while 2.0 * tails[k + 1] >= _OUTER_MASS_TOL:
        k += 1
    return k


def p_bihaar_many(k0s, lambda_j):
    """Exact Bi-Haar null tails at critical counts ``k0s`` for one ``lambda_j``.

    ``Pr(X1 - X2 + 8 (X3 - X4) >= ceil(8 k0 / r))`` with ``X1, X2 ~ P(lambda_j)``
    and ``X3, X4 ~ P(lambda_j / 2)``, summed over the outer difference
    ``X3 - X4`` until its remaining mass is below ``1e-14``.
    """
    k0s = np.atleast_1d(np.asarray(k0s))
    for k in k0s:
        _check_k0(k)
    if lambda_j < 0:
        raise DomainError(f"lambda_j must be >= 0, got {lambda_j!r}")
    if lambda_j == 0:
        return np.zeros(k0s.shape)
    lam = float(lambda_j)
    K = _outer_reach(lam / 2.0)
    crit = np.ceil(8.0 * k0s.astype(float) / BIHAAR_R).astype(np.int64)
    outer_pmf, _ = _sym_tails(lam / 2.0, K)
    ks = np.arange(-K, K + 1)
    w = outer_pmf[np.abs(ks)]
    _, inner_tails = _sym_tails(lam, int(crit.max()) + 8 * K + 1)
    upper = _upper_tail_fn(inner_tails)
    out = np.empty(k0s.shape, dtype=float)
    for i, t in enumerate(crit):
        out[i] = float(np.dot(w, upper(t - 8 * ks)))
    return out


def p_bihaar_exact(k0, lambda_j):
    """Exact Bi-Haar null tail at critical count ``k0`` (see :func:`p_bihaar_many`)."""
    return float(p_bihaar_many([k0], lambda_j)[0])


def bound_A(lambda_j):
    """Mass of ``|X1 - X2| >= 9`` on one side, ``X1, X2 ~ P(lambda_j)``.

    Equals ``(1 - e^{-2l}(I_0(2l) + 2 sum_{m=1..8} I_m(2l))) / 2`` but is summed
    from the tail so that it keeps full relative precision as ``lambda_j -> 0``.
    """
    if lambda_j < 0:
        raise DomainError(f"lambda_j must be >= 0, got {lambda_j!r}")
    if lambda_j == 0:
        return 0.0
    return skellam_tail(9, SkellamParams.symmetric(lambda_j))


def _bound_B_parts(lambda_j, K):
    if int(K) != K or K < 8:
        raise DomainError(f"K must be an integer >= 8, got {K!r}")
    if lambda_j < 0:
        raise DomainError(f"lambda_j must be >= 0, got {lambda_j!r}")
    K = int(K)
    if lambda_j == 0:
        return 0.0, 0.0
    mu = 2.0 * lambda_j
    pmf, tails = _sym_tails(mu, 65 + 8 * K + 1)
    upper = _upper_tail_fn(tails)
    ks = np.arange(-K, K + 1)
    # Outside the window [-64 - 8k, 64 - 8k]: Pr(S >= 65 - 8k) + Pr(S >= 65 + 8k).
    outside = upper(65 - 8 * ks) + upper(65 + 8 * ks)
    beyond = 2.0 * tails[K + 1]
    inner = float(np.dot(pmf[np.abs(ks)], outside))
    return 0.5 * (beyond + inner), 0.5 * beyond


def bound_B(lambda_j, K=16):
    """Truncated 2D diagonal-band bound ``B_K`` (outer index limited to ``|k| <= K``).

    Computed as ``(Pr(|S| > K) + sum_{|k|<=K} P(k) Pr(S outside window_k)) / 2``
    with ``S ~ Skellam(2 lambda_j, 2 lambda_j)``, which is algebraically the
    bracketed expression but free of cancellation.
    """
    return _bound_B_parts(lambda_j, K)[0]


def bound_B_residual(lambda_j, K=16):
    """Upper bound on ``B_K - B`` (which is always >= 0)."""
    return _bound_B_parts(lambda_j, K)[1]


@dataclass
class BoundReport:
    rows: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    strict_failures: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations and not self.strict_failures


def verify_prop1(lambdas, k0s, tol=1e-12, strict_grid=PVALUE_GRID):
    """Check ``p_BH <= p_H + A (1 - 2 p_H)`` on a grid, plus ``p_BH < p_H`` on ``strict_grid``."""
    lambdas = list(lambdas)
    k0s = [int(k) for k in k0s]
    if not lambdas or not k0s:
        raise DomainError("grids must be nonempty")
    rep = BoundReport()
    for lam in lambdas:
        a = bound_A(lam)
        pbh = p_bihaar_many(k0s, lam)
        ph = symmetric_tails(k0s, lam / 2.0) if lam > 0 else np.zeros(len(k0s))
        for k, h, b in zip(k0s, ph, pbh):
            bound = h + a * (1.0 - 2.0 * h)
            row = (float(lam), k, float(h), float(b), float(bound))
            rep.rows.append(row)
            if b > bound + tol:
                rep.violations.append(row)
    for lam, ks in strict_grid or ():
        for k in ks:
            h, b = p_haar(k, lam), p_bihaar_exact(k, lam)
            if not b < h:
                rep.strict_failures.append((lam, k, h, b))
    return rep


def pvalue_table(grid=PVALUE_GRID):
    """Rows ``(lambda_j, k0, p_H, p_BH, bound)`` ordered by ``lambda_j`` then ``k0``."""
    rows = []
    for lam, ks in sorted((float(l), tuple(sorted(k))) for l, k in grid):
        a = bound_A(lam)
        pbh = p_bihaar_many(list(ks), lam)
        for k, b in zip(ks, pbh):
            h = p_haar(k, lam)
            rows.append((lam, int(k), h, float(b), h + a * (1.0 - 2.0 * h)))
    return rows


# ----------------------------------------------------------------------------
# metrics


def nmise(estimates, truth):
    """Normalised mean integrated squared error averaged over replicates."""
    truth = np.asarray(truth, dtype=float)
    if np.any(truth <= 0):
        raise DomainError("truth must be strictly positive in every bin")
    est = np.asarray(estimates, dtype=float)
    if est.shape == truth.shape:
        est = est[None]
    if est.shape[1:] != truth.shape:
        raise DomainError(f"estimate shape {est.shape[1:]} does not match truth {truth.shape}")
    per = ((est - truth) ** 2 / truth).reshape(est.shape[0], -1).mean(axis=1)
    return float(per.mean())


def flux(volume, mask, background=0.0):
    """Per-band background-subtracted sum over the spatial ``mask``."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DomainError("flux mask is empty")
    vol = np.asarray(volume, dtype=float)
    return (vol[mask] - background).sum(axis=0)


def flux_loss(S_hat, S):
    """``||S_hat - S||_2 / sqrt(N)`` over the ``N`` spectral bands."""
    S_hat = np.asarray(S_hat, dtype=float)
    S = np.asarray(S, dtype=float)
    return float(np.linalg.norm(S_hat - S) / math.sqrt(S.size))


# ----------------------------------------------------------------------------
# generators


def gen_smooth(peak, length=1024):
    """Smooth, strictly positive periodic test intensity with maximum ``peak``.

    Two raised cosines (one and two periods over the support) on a constant
    floor; the minimum is above ``peak / 20``.
    """
    if not peak > 0:
        raise DomainError(f"peak must be > 0, got {peak!r}")
    t = (np.arange(length) + 0.5) / length
    f = (0.12
         + 0.55 * 0.5 * (1.0 + np.cos(2.0 * np.pi * (t - 0.3)))
         + 0.33 * 0.5 * (1.0 + np.cos(4.0 * np.pi * (t - 0.72))))
    return peak * f / f.max()


def amplitude_schedule(n_bands, a_start=2.0, a_end=1e-4):
    """Log-linear source amplitudes from ``a_start`` (band 0) to ``a_end`` (last band)."""
    if n_bands == 1:
        return np.array([a_start])
    return np.geomspace(a_start, a_end, n_bands)


def _center(shape):
    return (shape[0] - 1) / 2.0, (shape[1] - 1) / 2.0


def gen_hyperspectral(dims=(129, 129, 64), amplitudes=None, sigma=4.0, background=0.05):
    """Background plus a centred Gaussian source whose amplitude falls along ``nu``.

    Returns an ``(x, y, nu)`` intensity volume.
    """
    nx, ny, nnu = dims
    if min(dims) < 1:
        raise DomainError(f"dims must be positive, got {dims!r}")
    amps = amplitude_schedule(nnu) if amplitudes is None else np.asarray(amplitudes, dtype=float)
    cx, cy = _center(dims)
    xx, yy = np.meshgrid(np.arange(nx) - cx, np.arange(ny) - cy, indexing="ij")
    profile = np.exp(-(xx ** 2 + yy ** 2) / (2.0 * sigma ** 2))
    return background + profile[:, :, None] * amps[None, None, :]


def source_mask(shape, sigma=4.0, radius_factor=3.0):
    """Disk of radius ``radius_factor * sigma`` around the source centre."""
    cx, cy = _center(shape)
    xx, yy = np.meshgrid(np.arange(shape[0]) - cx, np.arange(shape[1]) - cy, indexing="ij")
    return xx ** 2 + yy ** 2 <= (radius_factor * sigma) ** 2


def sample_poisson(intensity, seed=0, replicate=0):
    """Independent Poisson counts from a counter-based stream keyed by ``(seed, replicate)``."""
    lam = np.asarray(intensity, dtype=float)
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise DomainError("intensity must be finite and >= 0")
    ss = np.random.SeedSequence([int(seed), int(replicate)])
    rng = np.random.Generator(np.random.Philox(ss))
    return rng.poisson(lam).astype(np.int64)


# ----------------------------------------------------------------------------
# benchmarks


def run_nmise_benchmark(peaks=(0.1, 1.0, 10.0, 100.0), reps=100, seed=0, length=1024,
                        scales=7, alpha=1e-3, method="fab",
                        transforms=("haar", "bihaar", "tihaar"), oracle=False):
    """NMISE per ``(peak, transform)``; returns a list of ``(peak, transform, nmise)``."""
    rows = []
    for peak in peaks:
        truth = gen_smooth(peak, length)
        acc = {t: 0.0 for t in transforms}
        for r in range(reps):
            counts = sample_poisson(truth, seed, r)
            for t in transforms:
                if oracle:
                    est = truth
                else:
                    est, _ = denoise(counts, DenoiseConfig(
                        transform=t, scheme="1d", scales=scales, alpha=alpha, method=method))
                acc[t] += nmise(est, truth)
        rows.extend((float(peak), t, acc[t] / reps) for t in transforms)
    return rows


def _denoise_volume(counts, transform, J_xy, J_nu, alpha, method):
    padded, crop = pad_to_scales(counts, (J_xy, J_xy, J_nu))
    cfg = DenoiseConfig(transform=transform, scheme="2d1d", scales=J_xy, scales_nu=J_nu,
                        alpha=alpha, method=method)
    est, rep = denoise(padded, cfg)
    return est[crop], rep


def run_flux_benchmark(dims=(129, 129, 64), sigma=4.0, background=0.05, seed=0, replicate=0,
                       J_xy=3, J_nu=5, alpha=1e-5, method="fab",
                       transforms=("haar", "bihaar")):
    """Flux curves and losses of each transform on one simulated volume."""
    truth = gen_hyperspectral(dims, sigma=sigma, background=background)
    mask = source_mask(dims, sigma)
    S = flux(truth, mask, background)
    counts = sample_poisson(truth, seed, replicate)
    curves, losses = {}, {}
    for t in transforms:
        est, _ = _denoise_volume(counts, t, J_xy, J_nu, alpha, method)
        curves[t] = flux(est, mask, background)
        losses[t] = flux_loss(curves[t], S)
    return {"truth": S, "curves": curves, "losses": losses}


def run_speed_benchmark(dims=(129, 129, 64), seed=0, J_xy=3, J_nu=5, alpha=1e-5, method="fab",
                        transforms=("bihaar", "tihaar"), repeats=1):
    """Best-of-``repeats`` wall time of each transform on the simulated volume."""
    counts = sample_poisson(gen_hyperspectral(dims), seed, 0)
    times = {}
    for t in transforms:
        best = math.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            _denoise_volume(counts, t, J_xy, J_nu, alpha, method)
            best = min(best, time.perf_counter() - t0)
        times[t] = best
    return times
