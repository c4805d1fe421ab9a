"""Per-band 2-D DFT services, PSF -> OTF conversion and the frequency-domain
least-squares inverse.

Forward transforms are unnormalized and inverses carry 1/(H*W), so the OTF DC
bin equals the kernel sum.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .cube import HsiCube, OtfStack, PsfStack, ShapeError, _frozen, _require_ndim


class Conversion(str, enum.Enum):
    """Scalarization applied after the inverse transform."""

    REAL = "real"
    AMPLITUDE = "amplitude"
    IMAG = "imag"


@dataclass(frozen=True, eq=False)
class FreqCube:
    data: np.ndarray  # complex, (bands, H, W)

    def __post_init__(self):
        a = _frozen(self.data, np.complex128)
        _require_ndim(a, 3, "FreqCube")
        object.__setattr__(self, "data", a)

    @property
    def shape(self):
        return self.data.shape


def fft2_cube(cube: HsiCube) -> FreqCube:
    return FreqCube(np.fft.fft2(cube.data, axes=(-2, -1)))


def ifft2_complex(freq: FreqCube) -> np.ndarray:
    return np.fft.ifft2(freq.data, axes=(-2, -1))


def ifft2_cube_real(freq: FreqCube, strategy=Conversion.REAL) -> HsiCube:
    z = ifft2_complex(freq)
    strategy = Conversion(strategy)
    if strategy is Conversion.REAL:
        return HsiCube(z.real)
    if strategy is Conversion.AMPLITUDE:
        return HsiCube(np.abs(z))
    return HsiCube(z.imag)


def imaginary_residue(freq: FreqCube) -> float:
    """max |Im(ifft)| / max |ifft|: zero for a Hermitian-symmetric spectrum."""
    z = ifft2_complex(freq)
    scale = np.abs(z).max()
    if scale == 0:
        return 0.0
    return float(np.abs(z.imag).max() / scale)


def hermitian_residue(spectrum: np.ndarray) -> float:
    """Relative deviation of ``X[k] = conj(X[-k])`` over the last two axes."""
    flipped = np.roll(np.flip(spectrum, axis=(-2, -1)), 1, axis=(-2, -1))
    scale = np.abs(spectrum).max()
    if scale == 0:
        return 0.0
    return float(np.abs(spectrum - np.conj(flipped)).max() / scale)


def embed_kernel(kernel: np.ndarray, height: int, width: int) -> np.ndarray:
    """Zero-pad ``kernel`` to the grid and move its centre tap to the origin."""
    kh, kw = kernel.shape[-2:]
    if kh > height or kw > width:
        raise ShapeError(f"kernel {kh}x{kw} larger than grid {height}x{width}")
    pad = np.zeros(kernel.shape[:-2] + (height, width), dtype=kernel.dtype)
    pad[..., :kh, :kw] = kernel
    return np.roll(pad, (-(kh // 2), -(kw // 2)), axis=(-2, -1))


def psf_to_otf(psfs: PsfStack, height: int, width: int) -> OtfStack:
    return OtfStack(np.fft.fft2(embed_kernel(psfs.data, height, width), axes=(-2, -1)))


def apply_otf(otf: OtfStack, cube: HsiCube, adjoint=False) -> HsiCube:
    """Circular convolution (or its transpose) through the frequency domain."""
    if otf.shape != cube.shape:
        raise ShapeError(f"OTF shape {otf.shape} does not match cube {cube.shape}")
    psi = np.conj(otf.data) if adjoint else otf.data
    return HsiCube(np.fft.ifft2(psi * np.fft.fft2(cube.data, axes=(-2, -1)), axes=(-2, -1)).real)


def freq_least_squares(otf: OtfStack, jf: FreqCube, eps=None) -> FreqCube:
    """Per-bin minimiser of ||J^F - psi I^F||^2, Tikhonov stabilised:
    ``conj(psi) J^F / (|psi|^2 + eps)``.

    ``eps`` defaults to 1e-8 * max|psi|^2.
    """
    if otf.shape != jf.shape:
        raise ShapeError(f"OTF shape {otf.shape} does not match spectrum {jf.shape}")
    power = np.abs(otf.data) ** 2
    if eps is None:
        eps = 1e-8 * power.max()
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    return FreqCube(np.conj(otf.data) * jf.data / (power + eps))
