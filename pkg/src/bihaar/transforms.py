"""Decimated Haar / biorthogonal-Haar filter banks and the undecimated Haar baseline.

Conventions
-----------
* Boundaries are periodic everywhere.
* Analysis filters are correlated with the input starting at ``2k + offset``:
  ``out[k] = sum_i taps[i] * x[2k + offset + i]``.
* Synthesis filters are the usual upsample-then-convolve: coefficient ``k``
  adds ``taps[L-1-i]`` to ``x[2k + offset + i]``.
* With these conventions the Haar detail is ``2^-c (x[2k+1] - x[2k])`` and the
  central taps of the Bi-Haar highpass sit on the same two samples.

Band keys
---------
1D pyramids key details by ``(j, "D")``; 2D pyramids by ``(j, o)`` with
``o`` in ``"H", "V", "D"`` (``H``: highpass along axis 0, ``V``: along axis 1).
2D+1D pyramids key details by ``(j_xy, o_xy, j_nu, o_nu)`` where ``o_xy`` is
``"A"`` (only at ``j_xy = J_xy``) or a 2D orientation, and ``o_nu`` is ``"a"``
(only at ``j_nu = J_nu``) or ``"d"``.  Volumes are indexed ``(x, y, nu)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SizeError, StructureError

__all__ = [
    "BIHAAR_R",
    "FilterBank",
    "haar_bank",
    "bihaar_bank",
    "Pyramid",
    "analysis_step",
    "synthesis_step",
    "ti_analysis_step",
    "ti_synthesis_step",
    "DecimatedEngine",
    "UndecimatedEngine",
    "split_axes",
    "merge_axes",
    "ORIENT_2D",
    "forward_1d",
    "inverse_1d",
    "forward_2d",
    "inverse_2d",
    "forward_2d1d",
    "inverse_2d1d",
    "forward_ti",
    "inverse_ti",
    "band_highpass_count",
    "next_multiple",
    "pad_to_scales",
]

BIHAAR_R = (1.0 + 2.0 ** -5) ** -0.5

# Bit tuples (highpass flag per axis, axes in split order) -> 2D orientation.
ORIENT_2D = {(0, 0): "A", (1, 0): "H", (0, 1): "V", (1, 1): "D"}
_BITS_2D = {v: k for k, v in ORIENT_2D.items()}


@dataclass(frozen=True)
class FilterBank:
    """Two-channel analysis/synthesis filter bank.

    ``r`` is the Bi-Haar correction: synthesis output is multiplied by
    ``1/r`` at every reconstruction stage (``r = 1`` for Haar).
    """

    name: str
    h: tuple
    g: tuple
    h_syn: tuple
    g_syn: tuple
    c: float = 0.0
    r: float = 1.0
    h_offset: int = 0
    g_offset: int = 0
    h_syn_offset: int = 0
    g_syn_offset: int = 0

    @property
    def is_bihaar(self):
        return self.r != 1.0


def haar_bank(c=0.0):
    s, t = 2.0 ** -c, 2.0 ** (c - 1)
    return FilterBank(
        name="haar",
        h=(s, s),
        g=(-s, s),
        h_syn=(t, t),
        g_syn=(t, -t),
        c=float(c),
        r=1.0,
    )


def bihaar_bank(c=0.0):
    s, t, r = 2.0 ** -c, 2.0 ** (c - 1), BIHAAR_R
    e = 1.0 / 8.0
    return FilterBank(
        name="bihaar",
        h=(s, s),
        g=tuple(s * r * v for v in (e, e, -1.0, 1.0, -e, -e)),
        h_syn=tuple(t * r * v for v in (-e, e, 1.0, 1.0, e, -e)),
        g_syn=(t, -t),
        c=float(c),
        r=r,
        g_offset=-2,
        h_syn_offset=-2,
    )


def band_highpass_count(key):
    """Number of highpass filterings that produced a detail band."""
    if len(key) == 2:
        o = key[1]
        return 2 if o == "D" else 1
    _, o_xy, _, o_nu = key
    n = {"A": 0, "H": 1, "V": 1, "D": 2}[o_xy]
    return n + (1 if o_nu == "d" else 0)


# ----------------------------------------------------------------------------
# single-level steps


def _correlate_down(x, taps, offset):
    n = x.shape[0]
    base = np.arange(0, n, 2)
    out = None
    for i, tap in enumerate(taps):
        part = tap * x[(base + offset + i) % n]
        out = part if out is None else out + part
    return out


def _upsample_add(y, coef, taps, offset):
    n = y.shape[0]
    base = np.arange(0, n, 2)
    last = len(taps) - 1
    for i in range(len(taps)):
        y[(base + offset + i) % n] += taps[last - i] * coef


def analysis_step(x, bank, axis=-1):
    """One decimated analysis stage along ``axis``; returns ``(lo, hi)``."""
    x = np.moveaxis(np.asarray(x, dtype=float), axis, 0)
    if x.shape[0] % 2:
        raise SizeError(f"axis length {x.shape[0]} is odd")
    lo = _correlate_down(x, bank.h, bank.h_offset)
    hi = _correlate_down(x, bank.g, bank.g_offset)
    return np.moveaxis(lo, 0, axis), np.moveaxis(hi, 0, axis)


def synthesis_step(lo, hi, bank, axis=-1):
    """Invert :func:`analysis_step`, including the ``1/r`` correction."""
    lo = np.moveaxis(np.asarray(lo, dtype=float), axis, 0)
    hi = np.moveaxis(np.asarray(hi, dtype=float), axis, 0)
    if lo.shape != hi.shape:
        raise StructureError(f"band shapes differ: {lo.shape} vs {hi.shape}")
    y = np.zeros((2 * lo.shape[0],) + lo.shape[1:])
    _upsample_add(y, lo, bank.h_syn, bank.h_syn_offset)
    _upsample_add(y, hi, bank.g_syn, bank.g_syn_offset)
    if bank.r != 1.0:
        y /= bank.r
    return np.moveaxis(y, 0, axis)


def ti_analysis_step(x, level, c=0.0, axis=-1):
    """Undecimated Haar stage at dilation ``2^(level-1)``; returns ``(lo, hi)``."""
    x = np.asarray(x, dtype=float)
    s = 2 ** (level - 1)
    shifted = np.roll(x, -s, axis=axis)
    k = 2.0 ** -c
    return k * (x + shifted), k * (shifted - x)


def ti_synthesis_step(lo, hi, level, c=0.0, axis=-1):
    """Average of the two reconstructions available at each sample."""
    s = 2 ** (level - 1)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != hi.shape:
        raise StructureError(f"band shapes differ: {lo.shape} vs {hi.shape}")
    up = lo + hi
    return 2.0 ** (c - 2) * (lo - hi + np.roll(up, s, axis=axis))


class DecimatedEngine:
    redundant = False

    def __init__(self, bank):
        self.bank = bank
        self.c = bank.c

    def split(self, x, axis, level):
        return analysis_step(x, self.bank, axis)

    def merge(self, lo, hi, axis, level):
        return synthesis_step(lo, hi, self.bank, axis)


class UndecimatedEngine:
    """Translation-invariant Haar steps (a trous dilation per level)."""

    redundant = True

    def __init__(self, c=0.0):
        self.c = float(c)
        self.bank = haar_bank(c)

    def split(self, x, axis, level):
        return ti_analysis_step(x, level, self.c, axis)

    def merge(self, lo, hi, axis, level):
        return ti_synthesis_step(lo, hi, level, self.c, axis)


def split_axes(x, axes, level, engine):
    """Separable one-level split along each axis in turn.

    Returns a dict mapping bit tuples (1 = highpass along that axis) to bands.
    """
    bands = {(): x}
    for axis in axes:
        nxt = {}
        for key, arr in bands.items():
            lo, hi = engine.split(arr, axis, level)
            nxt[key + (0,)] = lo
            nxt[key + (1,)] = hi
        bands = nxt
    return bands


def merge_axes(bands, axes, level, engine):
    """Invert :func:`split_axes`."""
    for depth in range(len(axes) - 1, -1, -1):
        axis = axes[depth]
        nxt = {}
        for key in {k[:depth] for k in bands}:
            nxt[key] = engine.merge(bands[key + (0,)], bands[key + (1,)], axis, level)
        bands = nxt
    return bands[()]


# ----------------------------------------------------------------------------
# pyramids


@dataclass
class Pyramid:
    """Multiscale decomposition: coarsest approximation plus detail bands."""

    scheme: str
    scales: tuple
    approx: np.ndarray
    details: dict
    bank: FilterBank
    shape: tuple
    redundant: bool = False
    meta: dict = field(default_factory=dict)

    def n_coefficients(self):
        return self.approx.size + sum(d.size for d in self.details.values())


def _check_scales(J, name="J"):
    if int(J) != J or J < 1:
        raise DomainError(f"{name} must be an integer >= 1, got {J!r}")
    return int(J)


def _check_divisible(shape, axes, J):
    for ax in axes:
        if shape[ax] % (2 ** J):
            raise SizeError(
                f"axis {ax} length {shape[ax]} is not divisible by 2^{J} = {2 ** J}"
            )


def _as_array(x, ndim):
    a = np.asarray(x, dtype=float)
    if a.ndim != ndim:
        raise StructureError(f"expected a {ndim}-D array, got shape {a.shape}")
    return a


def _decompose(x, axes, J, engine, orient):
    details = {}
    a = x
    for j in range(1, J + 1):
        bands = split_axes(a, axes, j, engine)
        for bits, arr in bands.items():
            if any(bits):
                details[(j, orient(bits))] = arr
        a = bands[(0,) * len(axes)]
    return a, details


def _recompose(a, details, axes, J, engine, orient):
    for j in range(J, 0, -1):
        bands = {}
        for bits in _all_bits(len(axes)):
            if not any(bits):
                bands[bits] = a
            else:
                key = (j, orient(bits))
                if key not in details:
                    raise StructureError(f"missing detail band {key}")
                bands[bits] = details[key]
        try:
            a = merge_axes(bands, axes, j, engine)
        except (ValueError, IndexError) as exc:
            raise StructureError(f"malformed bands at scale {j}: {exc}") from exc
    return a


def _all_bits(n):
    if n == 0:
        return [()]
    return [b + (t,) for b in _all_bits(n - 1) for t in (0, 1)]


def _orient_1d(bits):
    return "D"


def _orient_2d(bits):
    return ORIENT_2D[bits]


def _check_band_shapes(pyr, axes):
    # Each detail band must match the approximation it is merged with.
    J = pyr.scales[0]
    expect = list(pyr.shape)
    for j in range(1, J + 1):
        if not pyr.redundant:
            for ax in axes:
                expect[ax] //= 2
        for key, arr in pyr.details.items():
            if key[0] == j and arr.shape != tuple(expect):
                raise StructureError(
                    f"band {key} has shape {arr.shape}, expected {tuple(expect)}"
                )
    if pyr.approx.shape != tuple(expect):
        raise StructureError(
            f"approximation has shape {pyr.approx.shape}, expected {tuple(expect)}"
        )


def forward_1d(signal, J, bank, boundary="periodic"):
    """Decimated 1D decomposition to ``J`` scales."""
    _check_boundary(boundary)
    J = _check_scales(J)
    x = _as_array(signal, 1)
    _check_divisible(x.shape, (0,), J)
    a, details = _decompose(x, (0,), J, DecimatedEngine(bank), _orient_1d)
    return Pyramid("1d", (J,), a, details, bank, x.shape)


def inverse_1d(pyr):
    _check_band_shapes(pyr, (0,))
    engine = _engine_for(pyr)
    return _recompose(pyr.approx, pyr.details, (0,), pyr.scales[0], engine, _orient_1d)


def forward_2d(image, J, bank, boundary="periodic"):
    """Decimated separable 2D decomposition (rows then columns per level)."""
    _check_boundary(boundary)
    J = _check_scales(J)
    x = _as_array(image, 2)
    _check_divisible(x.shape, (0, 1), J)
    a, details = _decompose(x, (0, 1), J, DecimatedEngine(bank), _orient_2d)
    return Pyramid("2d", (J,), a, details, bank, x.shape)


def inverse_2d(pyr):
    _check_band_shapes(pyr, (0, 1))
    engine = _engine_for(pyr)
    return _recompose(pyr.approx, pyr.details, (0, 1), pyr.scales[0], engine, _orient_2d)


def _spectral_keys(J_nu):
    keys = [(j, "d") for j in range(1, J_nu + 1)]
    return keys + [(J_nu, "a")]


def _decompose_2d1d(x, J_xy, J_nu, engine):
    a_xy, spatial = _decompose(x, (0, 1), J_xy, engine, _orient_2d)
    spatial = dict(spatial)
    spatial[(J_xy, "A")] = a_xy
    details = {}
    approx = None
    for (jx, ox), band in spatial.items():
        a_nu, spec = _decompose(band, (2,), J_nu, engine, lambda bits: "d")
        for (jn, _), arr in spec.items():
            details[(jx, ox, jn, "d")] = arr
        if ox == "A":
            approx = a_nu
        else:
            details[(jx, ox, J_nu, "a")] = a_nu
    return approx, details


def _recompose_2d1d(approx, details, J_xy, J_nu, engine):
    spatial = {}
    for jx in range(1, J_xy + 1):
        for ox in ("H", "V", "D"):
            spatial[(jx, ox)] = _recompose_spectral(details, jx, ox, None, J_nu, engine)
    a_xy = _recompose_spectral(details, J_xy, "A", approx, J_nu, engine)
    return _recompose(a_xy, spatial, (0, 1), J_xy, engine, _orient_2d)


def _recompose_spectral(details, jx, ox, approx, J_nu, engine):
    if approx is None:
        key = (jx, ox, J_nu, "a")
        if key not in details:
            raise StructureError(f"missing band {key}")
        approx = details[key]
    spec = {}
    for jn in range(1, J_nu + 1):
        key = (jx, ox, jn, "d")
        if key not in details:
            raise StructureError(f"missing band {key}")
        spec[(jn, "d")] = details[key]
    try:
        return _recompose(approx, spec, (2,), J_nu, engine, lambda bits: "d")
    except StructureError:
        raise
    except (ValueError, IndexError) as exc:
        raise StructureError(f"malformed spectral bands: {exc}") from exc


def forward_2d1d(volume, J_xy, J_nu, bank, boundary="periodic"):
    """2D+1D decomposition of an ``(x, y, nu)`` volume.

    Each spectral plane is decomposed in 2D to ``J_xy`` scales, then every
    resulting spatial coefficient sequence is decomposed along ``nu`` to
    ``J_nu`` scales.
    """
    _check_boundary(boundary)
    J_xy = _check_scales(J_xy, "J_xy")
    J_nu = _check_scales(J_nu, "J_nu")
    x = _as_array(volume, 3)
    _check_divisible(x.shape, (0, 1), J_xy)
    _check_divisible(x.shape, (2,), J_nu)
    approx, details = _decompose_2d1d(x, J_xy, J_nu, DecimatedEngine(bank))
    return Pyramid("2d1d", (J_xy, J_nu), approx, details, bank, x.shape)


def inverse_2d1d(pyr):
    J_xy, J_nu = pyr.scales
    return _recompose_2d1d(pyr.approx, pyr.details, J_xy, J_nu, _engine_for(pyr))


def forward_ti(x, J, boundary="periodic", c=0.0, J_nu=None):
    """Undecimated (translation-invariant) Haar decomposition.

    The scheme follows the input dimensionality: 1D signal, 2D image, or a 3D
    ``(x, y, nu)`` volume handled as 2D+1D (``J`` spatial scales and ``J_nu``
    spectral scales, defaulting to ``J``).
    """
    _check_boundary(boundary)
    J = _check_scales(J)
    a = np.asarray(x, dtype=float)
    engine = UndecimatedEngine(c)
    if a.ndim == 1:
        approx, details = _decompose(a, (0,), J, engine, _orient_1d)
        return Pyramid("1d", (J,), approx, details, engine.bank, a.shape, redundant=True)
    if a.ndim == 2:
        approx, details = _decompose(a, (0, 1), J, engine, _orient_2d)
        return Pyramid("2d", (J,), approx, details, engine.bank, a.shape, redundant=True)
    if a.ndim == 3:
        J_nu = _check_scales(J if J_nu is None else J_nu, "J_nu")
        approx, details = _decompose_2d1d(a, J, J_nu, engine)
        return Pyramid("2d1d", (J, J_nu), approx, details, engine.bank, a.shape, redundant=True)
    raise StructureError(f"unsupported dimensionality {a.ndim}")


def inverse_ti(pyr):
    if not pyr.redundant:
        raise StructureError("inverse_ti needs an undecimated pyramid")
    if pyr.scheme == "1d":
        return inverse_1d(pyr)
    if pyr.scheme == "2d":
        return inverse_2d(pyr)
    return inverse_2d1d(pyr)


def _engine_for(pyr):
    if pyr.redundant:
        return UndecimatedEngine(pyr.bank.c)
    return DecimatedEngine(pyr.bank)


def _check_boundary(boundary):
    if boundary != "periodic":
        raise DomainError(f"only periodic boundaries are supported, got {boundary!r}")


def variance_scale(j, q, c):
    """Per-coefficient null variance factor ``2^(q j (1 - 2c))`` (times the bin intensity)."""
    return 2.0 ** (q * j * (1.0 - 2.0 * c))


def block_log2(key, q=None):
    """log2 of the number of input bins under one coefficient of band ``key``."""
    if len(key) == 2:
        j = key[0]
        return j * (q if q is not None else 1)
    jx, _, jn, _ = key
    return 2 * jx + jn


def is_power_of_two_multiple(n, J):
    return n % (2 ** J) == 0


def next_multiple(n, J):
    m = 2 ** J
    return int(math.ceil(n / m) * m)


def pad_to_scales(x, scales, mode="zero"):
    """Centre-pad each axis with zeros up to a multiple of ``2**scales[axis]``.

    Returns the padded array and the slice tuple that crops it back.
    """
    x = np.asarray(x)
    if len(scales) != x.ndim:
        raise StructureError(f"need one scale count per axis, got {len(scales)} for {x.ndim}-D input")
    if mode not in ("zero", "none"):
        raise DomainError(f"unknown padding mode {mode!r}")
    widths, crop = [], []
    for n, J in zip(x.shape, scales):
        extra = next_multiple(n, J) - n
        if extra and mode == "none":
            raise SizeError(f"axis of length {n} is not a multiple of 2^{J}")
        before = extra // 2
        widths.append((before, extra - before))
        crop.append(slice(before, before + n))
    return np.pad(x, widths), tuple(crop)
