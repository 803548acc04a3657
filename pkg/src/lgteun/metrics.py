"""Reduced-resolution image quality metrics.

All functions take ``(H, W, B)`` arrays (prediction first, reference second)
and compute in double precision.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from lgteun.errors import DegenerateInputError, ShapeError
from lgteun.tensor import _kernels

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03
Q_WINDOW = 32
CSV_HEADER = "image,psnr,ssim,q_avg,sam,ergas"


def _pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and reference {gt.shape} differ")
    if pred.ndim == 2:
        pred, gt = pred[..., None], gt[..., None]
    return pred, gt


def psnr(pred, gt, peak: float = 1.0) -> float:
    pred, gt = _pair(pred, gt)
    if peak <= 0:
        raise ValueError(f"peak must be > 0, got {peak}")
    mse = float(np.mean((pred - gt) ** 2))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak * peak / mse))


def sam(pred, gt, return_skipped: bool = False):
    """Mean spectral angle in radians over pixels where both spectra are nonzero."""
    pred, gt = _pair(pred, gt)
    p = pred.reshape(-1, pred.shape[-1])
    g = gt.reshape(-1, gt.shape[-1])
    npn = np.linalg.norm(p, axis=1)
    ngn = np.linalg.norm(g, axis=1)
    ok = (npn > 0) & (ngn > 0)
    skipped = int((~ok).sum())
    if not ok.any():
        raise DegenerateInputError("every pixel has a zero-norm spectrum")
    cos = np.einsum("ij,ij->i", p[ok], g[ok]) / (npn[ok] * ngn[ok])
    angle = float(np.mean(np.arccos(np.clip(cos, -1.0, 1.0))))
    return (angle, skipped) if return_skipped else angle


def ergas(pred, gt, scale_ratio: float = 0.25) -> float:
    """100 * ratio * sqrt(mean_b(RMSE_b^2 / mean_b^2)), ratio = low/high resolution."""
    pred, gt = _pair(pred, gt)
    mse_b = np.mean((pred - gt) ** 2, axis=(0, 1))
    mu_b = np.mean(gt, axis=(0, 1))
    if np.any(mu_b == 0):
        raise DegenerateInputError(f"band(s) {np.flatnonzero(mu_b == 0).tolist()} have zero mean")
    return float(100.0 * scale_ratio * np.sqrt(np.mean(mse_b / mu_b**2)))


def _gauss1d(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img, g):
    n = g.size
    t = sliding_window_view(img, n, axis=0) @ g
    return sliding_window_view(t, n, axis=1) @ g


def ssim(pred, gt, peak: float = 1.0) -> float:
    """Gaussian-window SSIM (valid region), averaged over space and bands."""
    pred, gt = _pair(pred, gt)
    if min(pred.shape[:2]) < SSIM_WINDOW:
        raise ShapeError(f"SSIM needs spatial extents >= {SSIM_WINDOW}, got {pred.shape[:2]}")
    g = _gauss1d()
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    vals = []
    for b in range(pred.shape[-1]):
        x, y = pred[..., b], gt[..., b]
        mx, my = _filter_valid(x, g), _filter_valid(y, g)
        sxx = _filter_valid(x * x, g) - mx * mx
        syy = _filter_valid(y * y, g) - my * my
        sxy = _filter_valid(x * y, g) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))


def q_index_avg(pred, gt, window: int = Q_WINDOW) -> float:
    """Universal image quality index over sliding windows (stride 1), averaged over bands.

    Windows where both inputs are constant (zero denominator) are skipped.
    """
    pred, gt = _pair(pred, gt)
    h, w = pred.shape[:2]
    if window > min(h, w) or window < 2:
        raise ShapeError(f"Q window {window} does not fit {h}x{w}")
    vals = []
    for b in range(pred.shape[-1]):
        mx, my, vx, vy, cxy = _kernels.window_moments(pred[..., b], gt[..., b], window)
        den = (vx + vy) * (mx * mx + my * my)
        ok = den > 0
        if ok.any():
            vals.append((4.0 * cxy[ok] * mx[ok] * my[ok]) / den[ok])
    if not vals:
        raise DegenerateInputError("all Q-index windows are degenerate")
    return float(np.mean(np.concatenate(vals)))


@dataclass
class IqaReport:
    psnr: float
    ssim: float
    q_avg: float
    sam: float
    ergas: float
    sam_skipped: int = 0

    def csv_row(self, image: str) -> str:
        return f"{image},{self.psnr:.6f},{self.ssim:.6f},{self.q_avg:.6f},{self.sam:.6f},{self.ergas:.6f}"

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate(pred, gt, peak: float = 1.0, scale_ratio: float = 0.25, q_window: int = Q_WINDOW) -> IqaReport:
    pred, gt = _pair(pred, gt)
    angle, skipped = sam(pred, gt, return_skipped=True)
    return IqaReport(
        psnr=psnr(pred, gt, peak),
        ssim=ssim(pred, gt, peak),
        q_avg=q_index_avg(pred, gt, min(q_window, *pred.shape[:2])),
        sam=angle,
        ergas=ergas(pred, gt, scale_ratio),
        sam_skipped=skipped,
    )


def csv_metadata() -> str:
    return (f"# ssim: gaussian {SSIM_WINDOW}-tap sigma={SSIM_SIGMA} K1={SSIM_K1} K2={SSIM_K2} valid; "
            f"q_avg: window {Q_WINDOW} stride 1 band-averaged; psnr cap {PSNR_CAP:g} dB")
