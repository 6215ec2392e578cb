"""Feature images and their on-disk formats.

Binary container (``.swf``)::

    b"SWF1" | u32 rows | u32 cols | u8 band-axis tag | rows*cols float32 (row-major)

All integers and floats are little-endian.
"""

from __future__ import annotations

import enum
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError

MAGIC = b"SWF1"
_HEADER = struct.Struct("<4sIIB")


class BandAxis(enum.IntEnum):
    FREQUENCY_BINS = 0
    MEL_BINS = 1
    SCATTERING_PATHS = 2


@dataclass
class FeatureImage:
    """2-D feature array laid out as ``[bands, frames]``."""

    data: np.ndarray
    band_axis: BandAxis = BandAxis.MEL_BINS
    band_labels: list = field(default_factory=list)
    time_step_s: float = 0.0

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2 or 0 in self.data.shape:
            raise InputError(f"feature image must be 2-D and non-empty, got shape {self.data.shape}")
        self.band_axis = BandAxis(self.band_axis)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def n_bands(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]

    def with_data(self, data: np.ndarray) -> "FeatureImage":
        return FeatureImage(data, self.band_axis, list(self.band_labels), self.time_step_s)


def to_bytes(img: FeatureImage) -> bytes:
    rows, cols = img.shape
    body = np.ascontiguousarray(img.data, dtype="<f4").tobytes()
    return _HEADER.pack(MAGIC, rows, cols, int(img.band_axis)) + body


def from_bytes(buf: bytes) -> FeatureImage:
    if len(buf) < _HEADER.size:
        raise InputError("truncated feature container")
    magic, rows, cols, tag = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise InputError(f"bad magic {magic!r}, expected {MAGIC!r}")
    expected = _HEADER.size + 4 * rows * cols
    if len(buf) != expected:
        raise InputError(f"container size {len(buf)} does not match header ({expected})")
    data = np.frombuffer(buf, dtype="<f4", offset=_HEADER.size).reshape(rows, cols)
    return FeatureImage(data.astype(np.float32), BandAxis(tag))


def save(img: FeatureImage, path) -> None:
    Path(path).write_bytes(to_bytes(img))


def load(path) -> FeatureImage:
    return from_bytes(Path(path).read_bytes())


def to_csv(img: FeatureImage) -> str:
    """One line per band, comma separated."""
    out = io.StringIO()
    for row in np.asarray(img.data, dtype=np.float64):
        out.write(",".join(repr(float(v)) for v in row))
        out.write("\n")
    return out.getvalue()


def to_pgm(data: np.ndarray) -> bytes:
    """Binary PGM (P5) heatmap, min-max scaled to 0..255; rows become image rows."""
    a = np.asarray(data, dtype=np.float64)
    lo, hi = float(a.min()), float(a.max())
    if hi > lo:
        scaled = np.round((a - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.zeros_like(a)
    pix = scaled.astype(np.uint8)
    rows, cols = pix.shape
    return f"P5\n{cols} {rows}\n255\n".encode("ascii") + pix.tobytes()


def read_pgm(buf: bytes) -> np.ndarray:
    parts = buf.split(b"\n", 3)
    if parts[0] != b"P5":
        raise InputError("not a binary PGM")
    cols, rows = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(rows, cols)
