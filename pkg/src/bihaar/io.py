"""Readers and writers for 1D CSV, PGM (P2/P5) and BHV1 volume files."""

from __future__ import annotations

import numpy as np

from .errors import ParseError

__all__ = [
    "read_csv_1d",
    "write_csv_1d",
    "read_pgm",
    "write_pgm",
    "read_bhv1",
    "write_bhv1",
    "image_to_volume",
    "volume_to_image",
    "sniff_format",
    "read_any",
]

BHV1_MAGIC = b"BHV1"
_BHV1_DTYPES = {"u32": np.dtype("<u4"), "f64": np.dtype("<f8")}


def sniff_format(data):
    """Guess the container from leading bytes: ``'bhv1'``, ``'pgm'`` or ``'csv'``."""
    if data.startswith(BHV1_MAGIC):
        return "bhv1"
    if data[:2] in (b"P2", b"P5"):
        return "pgm"
    return "csv"


# ---------------------------------------------------------------- CSV


def read_csv_1d(data):
    """One number per line; blank lines are ignored."""
    if isinstance(data, str):
        data = data.encode()
    values = []
    offset = 0
    for raw in data.split(b"\n"):
        line = raw.strip().rstrip(b",")
        if line:
            try:
                values.append(float(line.decode("ascii")))
            except (UnicodeDecodeError, ValueError):
                raise ParseError(f"not a number: {raw[:40]!r}", offset) from None
        offset += len(raw) + 1
    if not values:
        raise ParseError("no values found", 0)
    return np.array(values)


def write_csv_1d(values):
    values = np.asarray(values)
    if values.dtype.kind in "iu":
        lines = [str(int(v)) for v in values]
    else:
        lines = [repr(float(v)) for v in values]
    return ("\n".join(lines) + "\n").encode("ascii")


# ---------------------------------------------------------------- PGM


class _Tokens:
    def __init__(self, data, pos=0):
        self.data = data
        self.pos = pos

    def next(self, what):
        d, n = self.data, len(self.data)
        while self.pos < n:
            ch = d[self.pos:self.pos + 1]
            if ch == b"#":
                end = d.find(b"\n", self.pos)
                self.pos = n if end < 0 else end + 1
            elif ch.isspace():
                self.pos += 1
            else:
                break
        start = self.pos
        while self.pos < n and not d[self.pos:self.pos + 1].isspace() and d[self.pos:self.pos + 1] != b"#":
            self.pos += 1
        tok = d[start:self.pos]
        if not tok:
            raise ParseError(f"expected {what}, found end of data", start)
        try:
            return int(tok)
        except ValueError:
            raise ParseError(f"expected integer {what}, got {tok[:20]!r}", start) from None


def read_pgm(data):
    """Parse a P2 or P5 image into an integer array of shape ``(rows, cols)``."""
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise ParseError(f"bad PGM magic {magic!r}", 0)
    tok = _Tokens(data, 2)
    cols = tok.next("width")
    rows = tok.next("height")
    maxval = tok.next("maxval")
    if cols < 1 or rows < 1:
        raise ParseError(f"nonpositive PGM size {cols}x{rows}", 2)
    if not 0 < maxval <= 65535:
        raise ParseError(f"PGM maxval {maxval} outside 1..65535", tok.pos)
    count = rows * cols
    if magic == b"P2":
        vals = np.empty(count, dtype=np.int64)
        for i in range(count):
            vals[i] = tok.next("pixel")
        bad = np.nonzero((vals < 0) | (vals > maxval))[0]
        if bad.size:
            raise ParseError(f"pixel {int(vals[bad[0]])} exceeds maxval {maxval}", tok.pos)
        return vals.reshape(rows, cols)
    start = tok.pos + 1
    if start > len(data) or not data[tok.pos:start].isspace():
        raise ParseError("missing whitespace before P5 raster", tok.pos)
    dt = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = count * dt.itemsize
    if len(data) - start < need:
        raise ParseError(f"truncated P5 raster: need {need} bytes, have {len(data) - start}", len(data))
    vals = np.frombuffer(data, dtype=dt, count=count, offset=start).astype(np.int64)
    if np.any(vals > maxval):
        raise ParseError(f"pixel exceeds maxval {maxval}", start)
    return vals.reshape(rows, cols)


def write_pgm(image, binary=True, maxval=None):
    """Encode a nonnegative integer image; values are rounded and clipped to 65535."""
    img = np.clip(np.rint(np.asarray(image, dtype=float)), 0, 65535).astype(np.int64)
    if img.ndim != 2:
        raise ValueError("PGM needs a 2-D array")
    rows, cols = img.shape
    mv = int(maxval if maxval is not None else max(int(img.max(initial=0)), 1))
    head = f"{'P5' if binary else 'P2'}\n{cols} {rows}\n{mv}\n".encode("ascii")
    if binary:
        dt = ">u2" if mv > 255 else "u1"
        return head + img.astype(dt).tobytes()
    body = "\n".join(" ".join(str(v) for v in row) for row in img)
    return head + body.encode("ascii") + b"\n"


# ---------------------------------------------------------------- BHV1


def read_bhv1(data):
    """Parse a BHV1 file into an ``(x, y, nu)`` array (u32 -> int64, f64 -> float64)."""
    if not data.startswith(BHV1_MAGIC):
        raise ParseError(f"bad BHV1 magic {data[:4]!r}", 0)
    nl = data.find(b"\n")
    if nl < 0:
        raise ParseError("unterminated BHV1 header", len(data))
    fields = data[:nl].split(b" ")
    if len(fields) != 5 or fields[0] != BHV1_MAGIC:
        raise ParseError(f"BHV1 header needs 5 fields, got {len(fields)}", 0)
    pos = len(fields[0]) + 1
    dims = []
    for name, f in zip(("nx", "ny", "nnu"), fields[1:4]):
        try:
            v = int(f)
        except ValueError:
            raise ParseError(f"bad {name} {f[:20]!r}", pos) from None
        if v < 1:
            raise ParseError(f"{name} must be positive, got {v}", pos)
        dims.append(v)
        pos += len(f) + 1
    dname = fields[4].decode("ascii", "replace")
    if dname not in _BHV1_DTYPES:
        raise ParseError(f"unknown BHV1 dtype {dname!r}", pos)
    dt = _BHV1_DTYPES[dname]
    nx, ny, nnu = dims
    need = nx * ny * nnu * dt.itemsize
    have = len(data) - nl - 1
    if have != need:
        kind = "truncated" if have < need else "oversized"
        raise ParseError(f"{kind} BHV1 payload: need {need} bytes, have {have}", nl + 1 + min(have, need))
    flat = np.frombuffer(data, dtype=dt, offset=nl + 1)
    vol = flat.reshape(nnu, ny, nx).transpose(2, 1, 0)
    return vol.astype(np.int64 if dname == "u32" else np.float64)


def write_bhv1(volume, dtype=None):
    """Encode an ``(x, y, nu)`` array; integer arrays default to u32, others to f64."""
    vol = np.asarray(volume)
    if vol.ndim != 3:
        raise ValueError("BHV1 needs a 3-D (x, y, nu) array")
    if dtype is None:
        dtype = "u32" if vol.dtype.kind in "iub" else "f64"
    dt = _BHV1_DTYPES[dtype]
    if dtype == "u32" and (vol.min(initial=0) < 0 or vol.max(initial=0) > 0xFFFFFFFF):
        raise ValueError("values out of u32 range")
    nx, ny, nnu = vol.shape
    head = f"BHV1 {nx} {ny} {nnu} {dtype}\n".encode("ascii")
    return head + np.ascontiguousarray(vol.transpose(2, 1, 0)).astype(dt).tobytes()


def image_to_volume(image):
    """``(rows, cols)`` image -> ``(x=cols, y=rows, 1)`` volume."""
    return np.asarray(image).T[:, :, None]


def volume_to_image(volume):
    return np.asarray(volume)[:, :, 0].T


def read_any(data):
    """Decode by magic; returns ``(array, format)`` with images as ``(rows, cols)``."""
    fmt = sniff_format(data)
    if fmt == "bhv1":
        return read_bhv1(data), fmt
    if fmt == "pgm":
        return read_pgm(data), fmt
    return read_csv_1d(data), fmt
