"""Core array containers and the HSIC / PGM file formats.

Every container stores a float64 (or complex128) numpy array with the band
axis outermost, so a per-band 2-D FFT runs over the last two axes of a
contiguous block.  Arrays are copied on construction and frozen.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"HSIC"
VERSION = 1
HEADER = struct.Struct("<4s7I")  # magic, version, height, width, bands, 3 reserved
MAX_ELEMENTS = 2**31 // 4

# Default acquisition geometry of the reference benchmark.
DEFAULT_BANDS = 28
DEFAULT_WAVELENGTHS_NM = (450.0, 650.0)
DEFAULT_PSF_SHAPE = (512, 512, 28)
DEFAULT_FILTER_SHAPE = (256, 256, 28)


class CubeError(ValueError):
    """Base class for container validation failures."""


class ShapeError(CubeError):
    pass


class NonFiniteError(CubeError):
    pass


class RangeError(CubeError):
    pass


class FormatError(CubeError):
    """Malformed HSIC header (magic, version)."""


class DimensionOverflowError(CubeError):
    pass


class PayloadLengthError(CubeError):
    pass


def _frozen(a, dtype=np.float64):
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _require_finite(a, what):
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"{what}: contains NaN or Inf")


def _require_ndim(a, ndim, what):
    if a.ndim != ndim:
        raise ShapeError(f"{what}: expected {ndim}-D array, got shape {a.shape}")
    if min(a.shape) < 1:
        raise ShapeError(f"{what}: every dimension must be >= 1, got {a.shape}")


@dataclass(frozen=True, eq=False)
class HsiCube:
    """Hyperspectral cube, shape ``(bands, height, width)``."""

    data: np.ndarray

    def __post_init__(self):
        a = _frozen(self.data)
        _require_ndim(a, 3, "HsiCube")
        _require_finite(a, "HsiCube")
        object.__setattr__(self, "data", a)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True, eq=False)
class PsfStack:
    """Per-band convolution kernels, shape ``(bands, kh, kw)``."""

    data: np.ndarray

    def __post_init__(self):
        a = _frozen(self.data)
        _require_ndim(a, 3, "PsfStack")
        _require_finite(a, "PsfStack")
        sums = a.sum(axis=(1, 2))
        if np.any(sums <= 0):
            bad = int(np.argmin(sums))
            raise RangeError(f"PsfStack: band {bad} kernel sum {sums[bad]:g} is not > 0")
        object.__setattr__(self, "data", a)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def kernel_shape(self):
        return self.data.shape[1:]

    def normalized(self) -> "PsfStack":
        return PsfStack(self.data / self.data.sum(axis=(1, 2), keepdims=True))


@dataclass(frozen=True, eq=False)
class OtfStack:
    """Frequency response of each band on the scene grid, shape ``(bands, H, W)``."""

    data: np.ndarray

    def __post_init__(self):
        a = _frozen(self.data, np.complex128)
        _require_ndim(a, 3, "OtfStack")
        _require_finite(a, "OtfStack")
        object.__setattr__(self, "data", a)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True, eq=False)
class FilterStack:
    """Spectral transmission, shape ``(channels, bands, H, W)`` with entries in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        a = _frozen(self.data)
        _require_ndim(a, 4, "FilterStack")
        _require_finite(a, "FilterStack")
        if a.min() < 0 or a.max() > 1:
            raise RangeError(
                f"FilterStack: transmittance must lie in [0, 1], got [{a.min():g}, {a.max():g}]"
            )
        object.__setattr__(self, "data", a)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def bands(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]


@dataclass(frozen=True, eq=False)
class Measurement:
    """Sensor image, shape ``(channels, H, W)``."""

    data: np.ndarray

    def __post_init__(self):
        a = _frozen(self.data)
        _require_ndim(a, 3, "Measurement")
        _require_finite(a, "Measurement")
        object.__setattr__(self, "data", a)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


def save_cube(cube: HsiCube, path) -> None:
    """Write ``cube`` as HSIC.  Samples are stored as little-endian float32."""
    b, h, w = cube.shape
    payload = cube.data.astype("<f4").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, h, w, b, 0, 0, 0))
        fh.write(payload)


def load_cube(path) -> HsiCube:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise FormatError(f"{path}: file shorter than the {HEADER.size}-byte header")
    magic, version, h, w, b, *_ = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if min(h, w, b) < 1:
        raise FormatError(f"{path}: zero dimension in header ({h}x{w}x{b})")
    n = h * w * b
    if n > MAX_ELEMENTS:
        raise DimensionOverflowError(f"{path}: {h}x{w}x{b} exceeds {MAX_ELEMENTS} samples")
    payload = raw[HEADER.size:]
    if len(payload) != 4 * n:
        raise PayloadLengthError(
            f"{path}: header declares {n} samples ({4 * n} bytes), payload has {len(payload)} bytes"
        )
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(b, h, w)
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{path}: payload contains NaN or Inf")
    return HsiCube(data)


def band_to_gray(band: np.ndarray) -> np.ndarray:
    """Min-max map a 2-D plane to uint8; a constant plane maps to 128."""
    lo, hi = float(band.min()), float(band.max())
    if hi == lo:
        return np.full(band.shape, 128, dtype=np.uint8)
    return np.rint((band - lo) / (hi - lo) * 255.0).astype(np.uint8)


def export_band_image(cube: HsiCube, band: int, path) -> None:
    if not 0 <= band < cube.bands:
        raise IndexError(f"band {band} out of range for a {cube.bands}-band cube")
    img = band_to_gray(cube.data[band])
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if m is None:
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise FormatError(f"{path}: maxval {maxval} unsupported")
    return np.frombuffer(raw[m.end(): m.end() + w * h], dtype=np.uint8).reshape(h, w)
