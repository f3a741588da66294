"""Binary frame files (EPF1) and small CSV helpers.

EPF1 layout, all little-endian::

    b"EPF1"  u32 nx  u32 ny  u32 nframes
    f64 dt_frame  f64 x0  f64 y0  f64 hx  f64 hy
    f32 values[nframes][nx][ny]
"""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .grid import FrameSequence, ScalarField2D

EPF_MAGIC = b"EPF1"
_EPF_HEADER = struct.Struct("<4sIII5d")


def write_epf(path, seq: FrameSequence) -> Path:
    path = Path(path)
    f0 = seq[0]
    header = _EPF_HEADER.pack(EPF_MAGIC, f0.nx, f0.ny, len(seq), seq.dt_frame,
                              f0.origin[0], f0.origin[1], f0.spacing[0], f0.spacing[1])
    data = seq.stack().astype("<f4")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes(order="C"))
    return path


def read_epf(path) -> FrameSequence:
    raw = Path(path).read_bytes()
    if len(raw) < _EPF_HEADER.size:
        raise ValueError(f"{path}: truncated EPF1 header")
    magic, nx, ny, nframes, dt, x0, y0, hx, hy = _EPF_HEADER.unpack_from(raw)
    if magic != EPF_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    expected = _EPF_HEADER.size + 4 * nx * ny * nframes
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=_EPF_HEADER.size)
    data = data.reshape(nframes, nx, ny).astype(float)
    template = ScalarField2D(np.zeros((nx, ny)), (x0, y0), (hx, hy))
    return FrameSequence.from_array(data, template, dt)


def write_csv(path, header, rows) -> Path:
    """Write an RFC 4180 CSV with a header row; floats keep full precision."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    return rows[0], rows[1:]
