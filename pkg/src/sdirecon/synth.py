"""Seeded synthetic scenes, PSF stacks and filter stacks for the three
encoding families."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .cube import DEFAULT_WAVELENGTHS_NM, FilterStack, HsiCube, PsfStack
from .forward import Encoding, SdiSystem

# (centre nm, width nm) of the red, green and blue response curves
RGB_CURVES = ((600.0, 45.0), (540.0, 40.0), (460.0, 35.0))
MONO_CURVE = (550.0, 120.0)


def wavelengths(bands: int, span=DEFAULT_WAVELENGTHS_NM) -> np.ndarray:
    return np.linspace(span[0], span[1], bands)


def default_kernel_size(height: int, width: int, cap: int = 15) -> int:
    k = min(cap, height, width)
    return k if k % 2 else k - 1


def make_scene(height: int, width: int, bands: int, seed: int = 0, materials: int = 3) -> HsiCube:
    """Band-correlated scene in [0, 1]: smooth abundance maps with a few
    hard-edged patches, mixed with smooth spectral signatures."""
    rng = np.random.default_rng(seed)
    lam = np.linspace(0.0, 1.0, bands)
    sigs = []
    for _ in range(materials):
        c, s = rng.uniform(0.0, 1.0), rng.uniform(0.2, 0.6)
        sigs.append(0.2 + 0.8 * np.exp(-((lam - c) ** 2) / (2 * s**2)))
    sigs = np.array(sigs)
    smooth = max(height, width) / 8
    maps = []
    for _ in range(materials):
        m = ndimage.gaussian_filter(rng.random((height, width)), smooth, mode="wrap")
        m = (m - m.min()) / (np.ptp(m) or 1.0)
        y0, x0 = rng.integers(0, height), rng.integers(0, width)
        ph, pw = max(1, height // 4), max(1, width // 4)
        rows = (np.arange(height) - y0) % height < ph
        cols = (np.arange(width) - x0) % width < pw
        m = 0.6 * m + 0.4 * np.outer(rows, cols)
        maps.append(m)
    maps = np.array(maps)
    cube = np.einsum("mc,mhw->chw", sigs, maps) / materials
    cube = (cube - cube.min()) / (np.ptp(cube) or 1.0)
    return HsiCube(cube)


def _gaussian_kernel(size, sigma, dy=0.0, dx=0.0):
    ax = np.arange(size) - size // 2
    yy, xx = np.meshgrid(ax, ax, indexing="ij")
    return np.exp(-((yy - dy) ** 2 + (xx - dx) ** 2) / (2 * sigma**2))


def phase_psfs(bands, size, seed=0, sigma=0.7):
    """Narrow Gaussians whose centre drifts with wavelength."""
    rng = np.random.default_rng(seed)
    reach = min(1.0, (size // 2) - 1.5) if size > 3 else 0.0
    shifts = np.linspace(-reach, reach, bands)
    angle = rng.uniform(0, 2 * np.pi)
    ks = [_gaussian_kernel(size, sigma, s * np.sin(angle), s * np.cos(angle)) for s in shifts]
    return PsfStack(np.array(ks)).normalized()


def amplitude_psfs(bands, size, seed=0, keep=0.7):
    """Binary plus-shaped kernels with band-dependent arm length, randomly thinned."""
    rng = np.random.default_rng(seed)
    c = size // 2
    out = np.zeros((bands, size, size))
    for band in range(bands):
        arm = 1 + (band * (c - 1)) // max(bands - 1, 1) if c > 1 else c
        k = np.zeros((size, size))
        k[c, c - arm: c + arm + 1] = 1.0
        k[c - arm: c + arm + 1, c] = 1.0
        k *= rng.random((size, size)) < keep
        k[c, c] = 1.0
        out[band] = k
    return PsfStack(out).normalized()


def scatter_psfs(bands, size, seed=0):
    """Dense positive speckle filling the whole kernel support."""
    rng = np.random.default_rng(seed)
    speckle = rng.exponential(1.0, size=(bands, size, size))
    speckle = ndimage.gaussian_filter(speckle, (0, 0.6, 0.6), mode="wrap")
    return PsfStack(speckle).normalized()


def make_psfs(encoding, bands, size, seed=0) -> PsfStack:
    encoding = Encoding(encoding)
    if encoding is Encoding.PHASE:
        return phase_psfs(bands, size, seed)
    if encoding is Encoding.AMPLITUDE:
        return amplitude_psfs(bands, size, seed)
    return scatter_psfs(bands, size, seed)


def peak_energy_fraction(kernel: np.ndarray, radius: int = 2) -> float:
    """Share of squared kernel mass inside the (2r+1)^2 box around the peak."""
    k2 = np.asarray(kernel, dtype=np.float64) ** 2
    py, px = np.unravel_index(np.argmax(k2), k2.shape)
    box = k2[max(py - radius, 0): py + radius + 1, max(px - radius, 0): px + radius + 1]
    return float(box.sum() / k2.sum())


def make_filters(height, width, bands, channels=3, seed=0, variation=0.4) -> FilterStack:
    """Smooth Gaussian spectral responses (RGB-like for 3 channels) with a
    seeded per-pixel gain in ``[1 - variation, 1]``."""
    if channels not in (1, 3):
        raise ValueError(f"channels must be 1 or 3, got {channels}")
    if not 0 <= variation < 1:
        raise ValueError(f"variation must lie in [0, 1), got {variation}")
    rng = np.random.default_rng(seed)
    lam = wavelengths(bands)
    curves = RGB_CURVES if channels == 3 else (MONO_CURVE,)
    resp = np.array([np.exp(-((lam - c) ** 2) / (2 * w**2)) for c, w in curves])
    gain = 1.0 - variation * rng.random((channels, bands, height, width))
    return FilterStack(np.clip(resp[:, :, None, None] * gain, 0.0, 1.0))


def make_system(encoding, height, width, bands, channels=3, seed=0, kernel_size=None) -> SdiSystem:
    size = kernel_size or default_kernel_size(height, width)
    psfs = make_psfs(encoding, bands, size, seed)
    filters = make_filters(height, width, bands, channels, seed + 1)
    return SdiSystem(psfs, filters, Encoding(encoding))
