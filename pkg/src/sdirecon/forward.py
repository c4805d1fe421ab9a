"""Forward operators: SDI (PSF convolution then filter integration), plus the
mask-and-disperse (CASSI) and per-pixel response (array encoding) models used
for structural comparison.

Convolution is circular.  The kernel centre sits at ``(kh // 2, kw // 2)`` so a
centred delta kernel is the identity.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .cube import FilterStack, HsiCube, Measurement, PsfStack, ShapeError


class Encoding(str, enum.Enum):
    AMPLITUDE = "amplitude"
    PHASE = "phase"
    SCATTER = "scatter"


@dataclass(frozen=True, eq=False)
class SdiSystem:
    psfs: PsfStack
    filters: FilterStack
    encoding: Encoding = Encoding.AMPLITUDE
    boundary: str = "circular"

    def __post_init__(self):
        if self.psfs.bands != self.filters.bands:
            raise ShapeError(
                f"SdiSystem: PSF bands {self.psfs.bands} != filter bands {self.filters.bands}"
            )
        kh, kw = self.psfs.kernel_shape
        if kh > self.filters.height or kw > self.filters.width:
            raise ShapeError(
                f"SdiSystem: kernel {kh}x{kw} larger than scene {self.filters.height}x{self.filters.width}"
            )
        if self.boundary != "circular":
            raise ValueError(f"unsupported boundary {self.boundary!r}")
        object.__setattr__(self, "encoding", Encoding(self.encoding))

    @property
    def bands(self) -> int:
        return self.filters.bands

    @property
    def channels(self) -> int:
        return self.filters.channels

    @property
    def scene_shape(self):
        return (self.filters.bands, self.filters.height, self.filters.width)


@dataclass(frozen=True, eq=False)
class CassiSystem:
    mask: np.ndarray
    dispersion_step: int = 1

    def __post_init__(self):
        m = np.array(self.mask, dtype=np.float64)
        if m.ndim != 2:
            raise ShapeError(f"CassiSystem: mask must be 2-D, got {m.shape}")
        if m.min() < 0 or m.max() > 1:
            raise ValueError("CassiSystem: mask entries must lie in [0, 1]")
        if int(self.dispersion_step) != self.dispersion_step or self.dispersion_step < 0:
            raise ValueError("CassiSystem: dispersion step must be a non-negative integer")
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "dispersion_step", int(self.dispersion_step))


@dataclass(frozen=True, eq=False)
class ApeSystem:
    response: np.ndarray  # (bands, H, W)

    def __post_init__(self):
        q = np.array(self.response, dtype=np.float64)
        if q.ndim != 3:
            raise ShapeError(f"ApeSystem: response must be (bands, H, W), got {q.shape}")
        if q.min() < 0 or q.max() > 1:
            raise ValueError("ApeSystem: response entries must lie in [0, 1]")
        q.setflags(write=False)
        object.__setattr__(self, "response", q)


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "none"  # "none" | "gaussian"
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian"):
            raise ValueError(f"NoiseSpec: unknown kind {self.kind!r}")
        if not self.sigma >= 0:
            raise ValueError(f"NoiseSpec: sigma must be >= 0, got {self.sigma}")

    @classmethod
    def gaussian(cls, sigma, seed=0):
        return cls("gaussian" if sigma > 0 else "none", float(sigma), int(seed))


def _kernel_offsets(kh, kw):
    ch, cw = kh // 2, kw // 2
    for a in range(kh):
        for b in range(kw):
            yield a, b, a - ch, b - cw


def _convolve_planes(x, kernels, adjoint=False):
    out = np.zeros_like(x)
    sign = -1 if adjoint else 1
    _, kh, kw = kernels.shape
    for a, b, dy, dx in _kernel_offsets(kh, kw):
        w = kernels[:, a, b]
        if not np.any(w):
            continue
        out += w[:, None, None] * np.roll(x, (sign * dy, sign * dx), axis=(1, 2))
    return out


def _check_psf_scene(cube: HsiCube, psfs: PsfStack):
    if cube.bands != psfs.bands:
        raise ShapeError(f"cube has {cube.bands} bands, PSF stack has {psfs.bands}")
    kh, kw = psfs.kernel_shape
    if kh > cube.height or kw > cube.width:
        raise ShapeError(f"kernel {kh}x{kw} larger than scene {cube.height}x{cube.width}")


def convolve_psf(cube: HsiCube, psfs: PsfStack) -> HsiCube:
    """Per-band circular convolution, evaluated tap by tap in the spatial domain."""
    _check_psf_scene(cube, psfs)
    return HsiCube(_convolve_planes(cube.data, psfs.data))


def convolve_psf_adjoint(cube: HsiCube, psfs: PsfStack) -> HsiCube:
    """Transpose of :func:`convolve_psf` (circular correlation)."""
    _check_psf_scene(cube, psfs)
    return HsiCube(_convolve_planes(cube.data, psfs.data, adjoint=True))


def _check_filter_scene(shape, filters: FilterStack):
    if tuple(shape) != (filters.bands, filters.height, filters.width):
        raise ShapeError(
            f"cube shape {tuple(shape)} does not match filter grid "
            f"{(filters.bands, filters.height, filters.width)}"
        )


def apply_filter_integrate(cube: HsiCube, filters: FilterStack) -> Measurement:
    _check_filter_scene(cube.shape, filters)
    return Measurement(np.einsum("clhw,lhw->chw", filters.data, cube.data))


def filter_adjoint(measurement: Measurement, filters: FilterStack) -> HsiCube:
    if measurement.data.shape != (filters.channels, filters.height, filters.width):
        raise ShapeError(
            f"measurement shape {measurement.data.shape} does not match filter grid"
        )
    return HsiCube(np.einsum("clhw,chw->lhw", filters.data, measurement.data))


def add_noise(clean: np.ndarray, noise: NoiseSpec) -> np.ndarray:
    if noise.kind == "none" or noise.sigma == 0:
        return clean
    rng = np.random.default_rng(noise.seed)
    return clean + rng.normal(0.0, noise.sigma, size=clean.shape)


def sdi_forward(cube: HsiCube, system: SdiSystem, noise: NoiseSpec = NoiseSpec()) -> Measurement:
    clean = apply_filter_integrate(convolve_psf(cube, system.psfs), system.filters)
    return Measurement(add_noise(clean.data, noise))


def sdi_adjoint(measurement: Measurement, system: SdiSystem) -> HsiCube:
    """Phi1^T Phi2^T applied to a measurement."""
    return convolve_psf_adjoint(filter_adjoint(measurement, system.filters), system.psfs)


def cassi_forward(cube: HsiCube, system: CassiSystem) -> Measurement:
    """Mask, shift band ``n`` by ``n * d`` columns, sum.  Output width is W + d (bands - 1)."""
    c, h, w = cube.shape
    if system.mask.shape != (h, w):
        raise ShapeError(f"mask shape {system.mask.shape} does not match scene {(h, w)}")
    d = system.dispersion_step
    out = np.zeros((1, h, w + d * (c - 1)))
    masked = cube.data * system.mask
    for n in range(c):
        out[0, :, n * d: n * d + w] += masked[n]
    return Measurement(out)


def cassi_adjoint(measurement: Measurement, system: CassiSystem, bands: int) -> HsiCube:
    h, w = system.mask.shape
    d = system.dispersion_step
    planes = [measurement.data[0, :, n * d: n * d + w] * system.mask for n in range(bands)]
    return HsiCube(np.stack(planes))


def ape_forward(cube: HsiCube, system: ApeSystem) -> Measurement:
    if system.response.shape != cube.shape:
        raise ShapeError(f"response shape {system.response.shape} does not match cube {cube.shape}")
    return Measurement((cube.data * system.response).sum(axis=0, keepdims=True))


def ape_adjoint(measurement: Measurement, system: ApeSystem) -> HsiCube:
    return HsiCube(system.response * measurement.data[0])
