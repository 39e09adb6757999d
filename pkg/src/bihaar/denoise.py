"""Coarse-to-fine Poisson denoising with Haar-calibrated hypothesis tests.

The pipeline decomposes the counts, then walks from the coarsest scale to the
finest.  At each scale the intensity under every detail coefficient is
estimated from the co-located (running, already denoised) approximation, the
coefficient is kept only if it clears the Haar critical count for that
intensity, and one synthesis stage rebuilds the next finer approximation.  The
final estimate is projected onto the nonnegative orthant.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, SizeError, StructureError
from .special import symmetric_tails
from .thresholds import (
    METHODS,
    ThresholdSpec,
    lattice_integer_stat,
    lattice_keep,
)
from .transforms import (
    ORIENT_2D,
    DecimatedEngine,
    UndecimatedEngine,
    _all_bits,
    _decompose,
    _orient_1d,
    _orient_2d,
    _recompose,
    bihaar_bank,
    haar_bank,
    merge_axes,
)

__all__ = [
    "DenoiseConfig",
    "DenoiseReport",
    "BandStats",
    "estimate_lambda_j",
    "threshold_band",
    "coefficient_pvalue",
    "bh_fdr_select",
    "denoise",
]

TRANSFORMS = ("haar", "bihaar", "tihaar")
SCHEMES = ("1d", "2d", "2d1d")
MODES = ("fpr", "universal", "fdr")
_SCHEME_NDIM = {"1d": 1, "2d": 2, "2d1d": 3}


@dataclass
class DenoiseConfig:
    transform: str = "bihaar"
    scheme: str = "1d"
    scales: int = 3
    scales_nu: int | None = None
    alpha: float = 1e-3
    method: str = "fab"
    mode: str = "fpr"
    fdr_rate: float | None = None
    known_lambda: float | None = None
    c: float = 0.0

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise DomainError(f"transform must be one of {TRANSFORMS}, got {self.transform!r}")
        if self.scheme not in SCHEMES:
            raise DomainError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.method not in METHODS:
            raise DomainError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if int(self.scales) != self.scales or self.scales < 1:
            raise DomainError(f"scales must be an integer >= 1, got {self.scales!r}")
        if self.scheme == "2d1d":
            if self.scales_nu is None:
                self.scales_nu = self.scales
            if int(self.scales_nu) != self.scales_nu or self.scales_nu < 1:
                raise DomainError(f"scales_nu must be an integer >= 1, got {self.scales_nu!r}")
        if self.mode == "fdr":
            if self.fdr_rate is None or not 0.0 < self.fdr_rate < 1.0:
                raise DomainError(f"fdr_rate must lie in (0, 1), got {self.fdr_rate!r}")
        if self.known_lambda is not None and not self.known_lambda >= 0:
            raise DomainError(f"known_lambda must be >= 0, got {self.known_lambda!r}")

    @property
    def q(self):
        return {"1d": 1, "2d": 2, "2d1d": 3}[self.scheme]


@dataclass
class BandStats:
    band: str
    tested: int
    kept: int
    lambda_min: float
    lambda_median: float
    lambda_max: float
    k0_min: int | None = None
    k0_median: float | None = None
    k0_max: int | None = None
    z: float | None = None


@dataclass
class DenoiseReport:
    config: dict
    bands: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    padding: dict | None = None
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def band(self, name):
        for b in self.bands:
            if b.band == name:
                return b
        raise KeyError(name)


def band_name(key):
    if len(key) == 2:
        return f"j={key[0]}/{key[1]}"
    jx, ox, jn, on = key
    return f"jxy={jx}/{ox},jnu={jn}/{on}"


# ----------------------------------------------------------------------------
# building blocks


def estimate_lambda_j(a_j, c=0.0, j=1, q=1, known_lambda=None):
    """Per-location intensity under a scale-``j`` coefficient.

    ``max(2^(c j q) a_j, 0)``, or the constant ``2^(j q) lambda`` when the bin
    intensity is known.
    """
    a_j = np.asarray(a_j, dtype=float)
    if known_lambda is not None:
        return np.full(a_j.shape, (2.0 ** (j * q)) * known_lambda)
    return np.maximum((2.0 ** (c * j * q)) * a_j, 0.0)


def threshold_band(d_band, lambda_hat, spec, j=1, r=1.0, n_highpass=1):
    """Hard-threshold a detail band against per-location critical values.

    Returns ``(thresholded, kept_mask)``.  Bi-Haar bands (``r < 1``) are tested
    on their ``(r/8)^p`` lattice.
    """
    d = np.asarray(d_band, dtype=float)
    lam = np.asarray(lambda_hat, dtype=float)
    if lam.shape != d.shape:
        raise StructureError(f"lambda shape {lam.shape} does not match band shape {d.shape}")
    k0 = spec.critical_count(lam)
    scale = 2.0 ** (spec.c * j * spec.q)
    mask = lattice_keep(d, k0, scale, r, n_highpass)
    return np.where(mask, d, 0.0), mask


def coefficient_pvalue(d, lambda_hat, c=0.0, j=1, q=1, r=1.0, n_highpass=1):
    """Two-sided Haar p-value at the integerised statistic of each coefficient.

    ``2 Pr(X1 - X2 >= k)`` with ``X1, X2 ~ P(lambda_hat / 2)``; ``k = 0`` gives 1.
    Works elementwise on arrays.
    """
    d = np.asarray(d, dtype=float)
    lam = np.broadcast_to(np.asarray(lambda_hat, dtype=float), d.shape)
    if np.any(lam < 0):
        raise DomainError("lambda_hat must be >= 0")
    k = lattice_integer_stat(d, 2.0 ** (c * j * q), r, n_highpass)
    out = np.ones(d.shape)
    live = k >= 1
    if np.any(live):
        kl = k[live]
        ll = lam[live]
        vals = np.empty(kl.shape)
        uniq, inv = np.unique(ll, return_inverse=True)
        inv = inv.reshape(-1)
        for i, lv in enumerate(uniq):
            sel = inv == i
            vals[sel] = symmetric_tails(kl[sel], lv / 2.0)
        out[live] = np.minimum(2.0 * vals, 1.0)
    return out if out.ndim else float(out)


def bh_fdr_select(pvalues, q_fdr):
    """Benjamini-Hochberg step-up selection; returns a boolean keep mask."""
    p = np.asarray(pvalues, dtype=float)
    flat = p.reshape(-1)
    m = flat.size
    if m == 0:
        return np.zeros(p.shape, dtype=bool)
    order = np.argsort(flat, kind="stable")
    crit = q_fdr * np.arange(1, m + 1) / m
    ok = np.nonzero(flat[order] <= crit)[0]
    if ok.size == 0:
        return np.zeros(p.shape, dtype=bool)
    cutoff = flat[order][ok[-1]]
    return p <= cutoff


# ----------------------------------------------------------------------------
# band tester


class _Tester:
    """Decides each detail band; accumulates report statistics."""

    def __init__(self, config, r, phase="apply", masks=None):
        self.config = config
        self.r = r
        self.phase = phase
        self.masks = masks or {}
        self.pvalues = {}
        self.stats = []
        self.elapsed = 0.0
        if config.mode == "fpr":
            self.spec = ThresholdSpec.from_alpha(config.method, config.alpha, config.c, 1)

    def __call__(self, key, d, approx, L, p):
        t0 = time.perf_counter()
        cfg = self.config
        lam = estimate_lambda_j(approx, cfg.c, L, 1, cfg.known_lambda)
        if lam.shape != d.shape:
            raise StructureError(f"approximation shape {lam.shape} does not match band {key} {d.shape}")
        r = self.r
        if cfg.mode == "fdr":
            if self.phase == "collect":
                # Unchanged bands keep the running approximation equal to the raw one.
                lam_r = np.round(lam, 9)
                self.pvalues[key] = coefficient_pvalue(d, lam_r, cfg.c, L, 1, r, p)
                out = d
                mask = np.ones(d.shape, dtype=bool)
            else:
                mask = self.masks[key]
                out = np.where(mask, d, 0.0)
            self._record(key, lam, mask, None, None)
        else:
            if cfg.mode == "universal":
                spec = ThresholdSpec.from_band_size(cfg.method, d.size, cfg.c, 1) if d.size >= 2 \
                    else ThresholdSpec.from_band_size(cfg.method, 2, cfg.c, 1)
            else:
                spec = self.spec
            k0 = spec.critical_count(lam)
            scale = 2.0 ** (cfg.c * L)
            mask = lattice_keep(d, k0, scale, r, p)
            out = np.where(mask, d, 0.0)
            self._record(key, lam, mask, k0, spec.z)
        self.elapsed += time.perf_counter() - t0
        return out

    def _record(self, key, lam, mask, k0, z):
        st = BandStats(
            band=band_name(key),
            tested=int(mask.size),
            kept=int(mask.sum()),
            lambda_min=float(lam.min()),
            lambda_median=float(np.median(lam)),
            lambda_max=float(lam.max()),
        )
        if k0 is not None:
            st.k0_min = int(k0.min())
            st.k0_median = float(np.median(k0))
            st.k0_max = int(k0.max())
            st.z = float(z)
        self.stats.append(st)


# ----------------------------------------------------------------------------
# coarse-to-fine loops


def _run_group(a, details, axes, J, engine, tester, keyf, level_base, q, p_base, orient):
    """Algorithm loop over one separable group of axes.

    ``details`` maps ``(j, orientation)`` to raw bands; ``keyf`` turns that
    into the report/band key.
    """
    for j in range(J, 0, -1):
        L = level_base + j * q
        bands = {}
        for bits in _all_bits(len(axes)):
            if not any(bits):
                bands[bits] = a
                continue
            raw_key = (j, orient(bits))
            bands[bits] = tester(keyf(raw_key), details[raw_key], a, L, p_base + sum(bits))
        a = merge_axes(bands, axes, j, engine)
    return a


def _lowpass_chain(x, axis, J, engine):
    lows = [x]
    for j in range(1, J + 1):
        lows.append(engine.split(lows[-1], axis, j)[0])
    return lows


def _spectral_orient(bits):
    return "d"


def _run_1d_2d(x, cfg, engine, tester):
    axes = (0,) if cfg.scheme == "1d" else (0, 1)
    orient = _orient_1d if cfg.scheme == "1d" else _orient_2d
    t0 = time.perf_counter()
    a, details = _decompose(x, axes, cfg.scales, engine, orient)
    t_fwd = time.perf_counter() - t0
    out = _run_group(a, details, axes, cfg.scales, engine, tester,
                     lambda k: k, 0, len(axes), 0, orient)
    return out, t_fwd


def _run_2d1d(x, cfg, engine, tester):
    J_xy, J_nu = cfg.scales, cfg.scales_nu
    t0 = time.perf_counter()
    a_xy, spatial = _decompose(x, (0, 1), J_xy, engine, _orient_2d)
    a_nu, spec = _decompose(a_xy, (2,), J_nu, engine, _spectral_orient)
    t_fwd = time.perf_counter() - t0
    A = _run_group(a_nu, spec, (2,), J_nu, engine, tester,
                   lambda k: (J_xy, "A", k[0], "d"), 2 * J_xy, 1, 0, _spectral_orient)

    for jx in range(J_xy, 0, -1):
        lows = _lowpass_chain(A, 2, J_nu, engine)
        bands = {(0, 0): A}
        for bits, ox in ORIENT_2D.items():
            if ox == "A":
                continue
            p0 = sum(bits)
            b_a, b_spec = _decompose(spatial[(jx, ox)], (2,), J_nu, engine, _spectral_orient)
            kept_a = tester((jx, ox, J_nu, "a"), b_a, lows[J_nu], 2 * jx + J_nu, p0)
            kept = {}
            for jn in range(1, J_nu + 1):
                kept[(jn, "d")] = tester((jx, ox, jn, "d"), b_spec[(jn, "d")], lows[jn],
                                         2 * jx + jn, p0 + 1)
            bands[bits] = _recompose(kept_a, kept, (2,), J_nu, engine, _spectral_orient)
        A = merge_axes(bands, (0, 1), jx, engine)
    return A, t_fwd


def _check_counts(counts, cfg):
    x = np.asarray(counts)
    ndim = _SCHEME_NDIM[cfg.scheme]
    if x.ndim != ndim:
        raise StructureError(f"scheme {cfg.scheme!r} needs a {ndim}-D array, got shape {x.shape}")
    x = x.astype(float)
    if not np.all(np.isfinite(x)):
        raise DomainError("counts must be finite")
    if np.any(x < 0):
        raise DomainError("counts must be nonnegative")
    if np.any(x != np.round(x)):
        raise DomainError("counts must be integers")
    if cfg.scheme == "2d1d":
        req = [(0, cfg.scales), (1, cfg.scales), (2, cfg.scales_nu)]
    else:
        req = [(ax, cfg.scales) for ax in range(ndim)]
    for ax, J in req:
        if x.shape[ax] % (2 ** J):
            raise SizeError(
                f"axis {ax} length {x.shape[ax]} is not divisible by 2^{J} = {2 ** J}"
            )
    return x


def _make_engine(cfg):
    if cfg.transform == "haar":
        return DecimatedEngine(haar_bank(cfg.c)), 1.0
    if cfg.transform == "bihaar":
        bank = bihaar_bank(cfg.c)
        return DecimatedEngine(bank), bank.r
    return UndecimatedEngine(cfg.c), 1.0


def _run(x, cfg, engine, tester):
    if cfg.scheme == "2d1d":
        return _run_2d1d(x, cfg, engine, tester)
    return _run_1d_2d(x, cfg, engine, tester)


def denoise(counts, config):
    """Denoise a count array; returns ``(intensity_estimate, DenoiseReport)``."""
    cfg = config
    x = _check_counts(counts, cfg)
    engine, r = _make_engine(cfg)
    report = DenoiseReport(config=asdict(cfg))
    t_start = time.perf_counter()
    if cfg.mode == "fdr":
        collect = _Tester(cfg, r, phase="collect")
        _run(x, cfg, engine, collect)
        keys = list(collect.pvalues)
        flat = np.concatenate([collect.pvalues[k].reshape(-1) for k in keys]) if keys else np.zeros(0)
        keep = bh_fdr_select(flat, cfg.fdr_rate)
        masks, pos = {}, 0
        for k in keys:
            n = collect.pvalues[k].size
            masks[k] = keep[pos:pos + n].reshape(collect.pvalues[k].shape)
            pos += n
        tester = _Tester(cfg, r, phase="apply", masks=masks)
        report.notes.append(
            "BH-FDR applied jointly over all detail coefficients; p-values use "
            "intensities from the undenoised approximations"
        )
    else:
        tester = _Tester(cfg, r)
    est, t_fwd = _run(x, cfg, engine, tester)
    est = np.maximum(est, 0.0)
    total = time.perf_counter() - t_start
    report.bands = tester.stats
    report.timing = {
        "forward": t_fwd,
        "testing": tester.elapsed,
        "synthesis": max(total - t_fwd - tester.elapsed, 0.0),
        "total": total,
    }
    return est, report
