"""Dense ground truth for tiny instances.

Operators are assembled entry by entry from kernel taps, filter values and
mask values, never by pushing basis vectors through the fast code paths, so
comparisons against :mod:`sdirecon.forward` and :mod:`sdirecon.solver` are
two independent computations.

Vectorization is band-outermost row-major: index ``l*H*W + y*W + x``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .cube import FilterStack, PsfStack
from .forward import ApeSystem, CassiSystem, SdiSystem

MAX_ENTRIES = 2**24
MAX_HESSIAN_UNKNOWNS = 4096


class OperatorTooLargeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DenseOperator:
    matrix: np.ndarray

    def __post_init__(self):
        if self.matrix.ndim != 2:
            raise ValueError("DenseOperator needs a 2-D matrix")
        _guard(*self.matrix.shape)

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    def __matmul__(self, x):
        return self.matrix @ np.ravel(x)


def _guard(rows, cols):
    if rows * cols > MAX_ENTRIES:
        raise OperatorTooLargeError(f"{rows}x{cols} operator exceeds {MAX_ENTRIES} entries")


def materialize_phi1(psfs: PsfStack, height: int, width: int) -> DenseOperator:
    """Block-diagonal (over bands) circulant convolution matrix."""
    c = psfs.bands
    kh, kw = psfs.kernel_shape
    n = height * width
    _guard(n * c, n * c)
    m = np.zeros((n * c, n * c))
    for band in range(c):
        off = band * n
        for y in range(height):
            for x in range(width):
                row = off + y * width + x
                for a in range(kh):
                    for b in range(kw):
                        sy = (y - (a - kh // 2)) % height
                        sx = (x - (b - kw // 2)) % width
                        m[row, off + sy * width + sx] += psfs.data[band, a, b]
    return DenseOperator(m)


def materialize_phi2(filters: FilterStack) -> DenseOperator:
    ch, c, h, w = filters.data.shape
    n = h * w
    _guard(n * ch, n * c)
    m = np.zeros((n * ch, n * c))
    for k in range(ch):
        for band in range(c):
            for p in range(n):
                m[k * n + p, band * n + p] = filters.data[k, band].flat[p]
    return DenseOperator(m)


def materialize_cassi(system: CassiSystem, bands: int) -> DenseOperator:
    h, w = system.mask.shape
    d = system.dispersion_step
    wout = w + d * (bands - 1)
    _guard(h * wout, h * w * bands)
    m = np.zeros((h * wout, h * w * bands))
    for band in range(bands):
        for y in range(h):
            for x in range(w):
                m[y * wout + x + band * d, band * h * w + y * w + x] = system.mask[y, x]
    return DenseOperator(m)


def materialize_ape(system: ApeSystem) -> DenseOperator:
    c, h, w = system.response.shape
    n = h * w
    _guard(n, n * c)
    m = np.zeros((n, n * c))
    for band in range(c):
        for p in range(n):
            m[p, band * n + p] = system.response[band].flat[p]
    return DenseOperator(m)


def dense_solve_filtering(phi1: DenseOperator, phi2: DenseOperator, measurement, current, gamma):
    """J = (Phi2^T Phi2 + gamma 1)^-1 (Phi2^T M + gamma Phi1 I_k) by LU solve."""
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    a2 = phi2.matrix
    lhs = a2.T @ a2 + gamma * np.eye(a2.shape[1])
    rhs = a2.T @ np.ravel(measurement) + gamma * (phi1.matrix @ np.ravel(current))
    return scipy.linalg.solve(lhs, rhs, assume_a="gen")


def dense_solve_convolution(otf, jf, uf, phi):
    """Dense complex solve of (Psi^H Psi + phi 1) x = Psi^H J^F + phi u^F, Psi = diag(otf)."""
    psi = np.diag(np.ravel(otf).astype(np.complex128))
    _guard(*psi.shape)
    lhs = psi.conj().T @ psi + phi * np.eye(psi.shape[0])
    rhs = psi.conj().T @ np.ravel(jf) + phi * np.ravel(uf)
    return scipy.linalg.solve(lhs, rhs)


def dense_solve_convolution_spatial(phi1: DenseOperator, target, prior, phi):
    """Spatial-domain counterpart: (Phi1^T Phi1 + phi 1)^-1 (Phi1^T J + phi u)."""
    a1 = phi1.matrix
    lhs = a1.T @ a1 + phi * np.eye(a1.shape[1])
    return scipy.linalg.solve(lhs, a1.T @ np.ravel(target) + phi * np.ravel(prior))


def woodbury_sides(phi2: DenseOperator, gamma):
    """Both sides of the matrix-inverse identity for (Phi2^T Phi2 + gamma 1)^-1,
    each formed by explicit inversion."""
    a2 = phi2.matrix
    n, m = a2.shape
    direct = np.linalg.inv(a2.T @ a2 + gamma * np.eye(m))
    inner = np.linalg.inv(np.eye(n) + a2 @ a2.T / gamma)
    identity = np.eye(m) / gamma - (a2.T @ inner @ a2) / gamma**2
    return direct, identity


def condition_number(op) -> float:
    """sigma_max / sigma_min of the operator (smallest clipped at 1e-300)."""
    mat = op.matrix if isinstance(op, DenseOperator) else np.asarray(op)
    s = np.linalg.svd(mat, compute_uv=False)
    return float(s[0] / max(s[-1], 1e-300))


def condition_number_iterative(op, iters=500, seed=0) -> float:
    """Power iteration for sigma_max and inverse iteration for sigma_min on A^T A."""
    mat = op.matrix if isinstance(op, DenseOperator) else np.asarray(op)
    gram = mat.T @ mat
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(gram.shape[0])
    for _ in range(iters):
        v = gram @ v
        v /= np.linalg.norm(v)
    lam_max = v @ gram @ v
    lu = scipy.linalg.lu_factor(gram)
    v = rng.standard_normal(gram.shape[0])
    for _ in range(iters):
        v = scipy.linalg.lu_solve(lu, v)
        v /= np.linalg.norm(v)
    lam_min = v @ gram @ v
    return float(np.sqrt(lam_max / lam_min))


def dft_matrix(height: int, width: int) -> np.ndarray:
    """Unitary 2-D DFT acting on row-major vectorized planes."""
    fh = np.fft.fft(np.eye(height), axis=0, norm="ortho")
    fw = np.fft.fft(np.eye(width), axis=0, norm="ortho")
    return np.kron(fh, fw)


def offdiag_ratio(mat: np.ndarray) -> float:
    total = np.linalg.norm(mat)
    if total == 0:
        return 0.0
    return float(np.linalg.norm(mat - np.diag(np.diag(mat))) / total)


def off_pixel_energy(gram: np.ndarray, pixels: int) -> float:
    """Frobenius energy of entries coupling two different pixels."""
    idx = np.arange(gram.shape[0]) % pixels
    mask = idx[:, None] != idx[None, :]
    return float(np.linalg.norm(gram[mask]))


@dataclass
class HessianReport:
    dims: tuple
    condition_number: float
    offdiag_ratio_spatial: float
    offdiag_ratio_freq: float | None = None
    offdiag_ratio_full: float | None = None
    off_pixel_energy: float | None = None

    def to_dict(self):
        return {
            "conditionNumber": self.condition_number,
            "offDiagRatioSpatial": self.offdiag_ratio_spatial,
            "offDiagRatioFreq": self.offdiag_ratio_freq,
            "offDiagRatioFull": self.offdiag_ratio_full,
            "offPixelEnergy": self.off_pixel_energy,
            "dims": list(self.dims),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def hessian_report(system, bands=None) -> HessianReport:
    """Dense Phi^T Phi statistics.

    For an SDI system the spatial ratio refers to the convolution block
    Phi1^T Phi1 and the frequency ratio to F Phi1^T Phi1 F^H; the full
    Phi^T Phi ratio is reported separately.  ``bands`` is required for a
    CASSI system, whose mask carries no spectral extent.
    """
    if isinstance(system, SdiSystem):
        c, h, w = system.scene_shape
        _check_unknowns(c * h * w)
        phi1 = materialize_phi1(system.psfs, h, w).matrix
        phi = materialize_phi2(system.filters).matrix @ phi1
        gram = phi.T @ phi
        conv_gram = phi1.T @ phi1
        f = scipy.linalg.block_diag(*[dft_matrix(h, w)] * c)
        freq = f @ conv_gram @ f.conj().T
        return HessianReport(
            dims=(h, w, c),
            condition_number=condition_number(gram),
            offdiag_ratio_spatial=offdiag_ratio(conv_gram),
            offdiag_ratio_freq=offdiag_ratio(freq),
            offdiag_ratio_full=offdiag_ratio(gram),
            off_pixel_energy=off_pixel_energy(gram, h * w),
        )
    if isinstance(system, ApeSystem):
        c, h, w = system.response.shape
        _check_unknowns(c * h * w)
        phi = materialize_ape(system).matrix
    elif isinstance(system, CassiSystem):
        if bands is None:
            raise ValueError("bands is required for a CASSI system")
        h, w = system.mask.shape
        c = bands
        _check_unknowns(c * h * w)
        phi = materialize_cassi(system, bands).matrix
    else:
        raise TypeError(f"unsupported system {type(system).__name__}")
    gram = phi.T @ phi
    return HessianReport(
        dims=(h, w, c),
        condition_number=condition_number(gram),
        offdiag_ratio_spatial=offdiag_ratio(gram),
        off_pixel_energy=off_pixel_energy(gram, h * w),
    )


def _check_unknowns(n):
    if n > MAX_HESSIAN_UNKNOWNS:
        raise OperatorTooLargeError(f"{n} unknowns exceeds {MAX_HESSIAN_UNKNOWNS}")


EQUIVALENCE_RTOL = 1e-8


def _rel(a, b):
    scale = np.linalg.norm(b)
    return float(np.linalg.norm(np.ravel(a) - np.ravel(b)) / (scale if scale > 0 else 1.0))


def equivalence_trial(seed: int) -> dict:
    """One random tiny instance: relative errors of both closed-form updates
    against their dense solves."""
    from .cube import HsiCube, Measurement
    from .solver import convolution_update, eta_field, filtering_update
    from .spectral import FreqCube, psf_to_otf

    rng = np.random.default_rng(seed)
    h, w = (int(v) for v in rng.integers(3, 7, size=2))
    bands = int(rng.integers(1, 4))
    channels = int(rng.choice([1, 3]))
    k = int(rng.integers(1, min(h, w) + 1))
    psfs = PsfStack(rng.random((bands, k, k)) + 1e-3)
    filters = FilterStack(rng.random((channels, bands, h, w)))
    system = SdiSystem(psfs, filters)
    current = rng.random((bands, h, w))
    measurement = rng.random((channels, h, w))
    gamma = float(rng.uniform(0.05, 2.0))
    fast = filtering_update(HsiCube(current), Measurement(measurement), system, eta_field(filters), gamma)
    dense = dense_solve_filtering(materialize_phi1(psfs, h, w), materialize_phi2(filters),
                                  measurement, current, gamma)
    otf = psf_to_otf(psfs, h, w)
    jf = rng.standard_normal((bands, h, w)) + 1j * rng.standard_normal((bands, h, w))
    uf = rng.standard_normal((bands, h, w)) + 1j * rng.standard_normal((bands, h, w))
    phi = float(rng.uniform(0.05, 2.0))
    conv = convolution_update(FreqCube(jf), FreqCube(uf), otf, phi)
    conv_dense = dense_solve_convolution(otf.data, jf, uf, phi)
    return {
        "seed": seed,
        "dims": (h, w, bands, channels),
        "filtering": _rel(fast.data, dense),
        "convolution": _rel(conv.data, conv_dense),
    }
