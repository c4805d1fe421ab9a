"""PSNR, SSIM and SAM over hyperspectral cubes."""

from __future__ import annotations

import csv
import io
import math

import numpy as np
from scipy import ndimage

from .cube import HsiCube, ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SAM_NORM_FLOOR = 1e-12

CSV_FIELDS = ("scene", "method", "psnr", "ssim", "sam")


def _pair(ref, test):
    r = ref.data if isinstance(ref, HsiCube) else np.asarray(ref, dtype=np.float64)
    t = test.data if isinstance(test, HsiCube) else np.asarray(test, dtype=np.float64)
    if r.shape != t.shape:
        raise ShapeError(f"shape mismatch: {r.shape} vs {t.shape}")
    return r, t


def psnr(ref, test, peak=1.0) -> float:
    """10 log10(peak^2 / MSE); ``math.inf`` when the cubes are identical."""
    if not peak > 0:
        raise ValueError(f"peak must be > 0, got {peak}")
    r, t = _pair(ref, test)
    mse = float(np.mean((r - t) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-(ax**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _filter_valid(plane, window):
    full = ndimage.correlate(plane, window, mode="constant")
    half = window.shape[0] // 2
    return full[half: plane.shape[0] - half, half: plane.shape[1] - half]


def ssim(ref, test, data_range=1.0) -> float:
    """Mean over bands of the Gaussian-window SSIM map (valid region only)."""
    r, t = _pair(ref, test)
    if r.ndim == 2:
        r, t = r[None], t[None]
    if r.shape[-1] < SSIM_WINDOW or r.shape[-2] < SSIM_WINDOW:
        raise ShapeError(f"image {r.shape[-2]}x{r.shape[-1]} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    win = gaussian_window()
    scores = []
    for a, b in zip(r, t):
        mu_a, mu_b = _filter_valid(a, win), _filter_valid(b, win)
        saa = _filter_valid(a * a, win) - mu_a**2
        sbb = _filter_valid(b * b, win) - mu_b**2
        sab = _filter_valid(a * b, win) - mu_a * mu_b
        num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
        den = (mu_a**2 + mu_b**2 + c1) * (saa + sbb + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


def sam(ref, test) -> float:
    """Mean spectral angle in degrees over pixels where both spectra are nonzero.

    NaN when no pixel qualifies.
    """
    r, t = _pair(ref, test)
    if r.shape[0] < 2:
        raise ShapeError("SAM needs at least 2 bands")
    rv = r.reshape(r.shape[0], -1)
    tv = t.reshape(t.shape[0], -1)
    nr = np.linalg.norm(rv, axis=0)
    nt = np.linalg.norm(tv, axis=0)
    keep = (nr > SAM_NORM_FLOOR) & (nt > SAM_NORM_FLOOR)
    if not keep.any():
        return math.nan
    cos = (rv[:, keep] * tv[:, keep]).sum(axis=0) / (nr[keep] * nt[keep])
    return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))).mean())


def metric_row(scene, method, ref, test, peak=1.0) -> dict:
    r, _ = _pair(ref, test)
    has_window = min(r.shape[-2:]) >= SSIM_WINDOW
    return {
        "scene": scene,
        "method": method,
        "psnr": psnr(ref, test, peak),
        "ssim": ssim(ref, test) if has_window else math.nan,
        "sam": sam(ref, test) if r.shape[0] >= 2 else math.nan,
    }


def rows_to_csv(rows, fields=CSV_FIELDS) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fields), extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
