"""Reconstruction quality metrics on unit-range grayscale images."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .image import Image

__all__ = ["psnr", "ssim", "snr_db", "rmse", "QualityReport", "quality_report"]


def _as_array(a) -> np.ndarray:
    if isinstance(a, Image):
        return a.pixels
    return np.asarray(a, dtype=np.float64)


def _pair(ref, test) -> tuple[np.ndarray, np.ndarray]:
    r, t = _as_array(ref), _as_array(test)
    if r.shape != t.shape:
        raise DimensionError(f"shape mismatch {r.shape} vs {t.shape}")
    return r, t


def rmse(ref, test) -> float:
    """Root mean squared error."""
    r, t = _pair(ref, test)
    return float(np.sqrt(np.mean((r - t) ** 2)))


def psnr(ref, test) -> float:
    """Peak signal-to-noise ratio in dB with peak fixed at 1.0.

    Identical inputs return +inf.
    """
    r, t = _pair(ref, test)
    mse = float(np.mean((r - t) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def snr_db(signal, noise) -> float:
    """20 log10 of the l2-norm ratio between signal and noise."""
    s, n = _as_array(signal), _as_array(noise)
    ns = float(np.linalg.norm(n.reshape(-1)))
    ss = float(np.linalg.norm(s.reshape(-1)))
    if ns == 0.0:
        return math.inf
    if ss == 0.0:
        return -math.inf
    return 20.0 * math.log10(ss / ns)


def _window_sums(a: np.ndarray, k: int) -> np.ndarray:
    # all k-by-k window sums via a padded double cumulative sum
    s = np.zeros((a.shape[0] + 1, a.shape[1] + 1))
    s[1:, 1:] = a.cumsum(axis=0).cumsum(axis=1)
    return s[k:, k:] - s[:-k, k:] - s[k:, :-k] + s[:-k, :-k]


def ssim(ref, test, window: int = 8) -> float:
    """Mean structural similarity over uniform sliding windows.

    Uses unit dynamic range with the customary stabilizers
    C1 = 0.01^2 and C2 = 0.03^2. The window shrinks to the image side
    when the image is smaller than `window`.
    """
    r, t = _pair(ref, test)
    if r.ndim != 2:
        raise DimensionError(f"ssim expects 2-D images, got ndim={r.ndim}")
    k = min(window, r.shape[0], r.shape[1])
    n = float(k * k)
    c1 = 0.01**2
    c2 = 0.03**2
    mu_r = _window_sums(r, k) / n
    mu_t = _window_sums(t, k) / n
    var_r = _window_sums(r * r, k) / n - mu_r**2
    var_t = _window_sums(t * t, k) / n - mu_t**2
    cov = _window_sums(r * t, k) / n - mu_r * mu_t
    num = (2.0 * mu_r * mu_t + c1) * (2.0 * cov + c2)
    den = (mu_r**2 + mu_t**2 + c1) * (var_r + var_t + c2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class QualityReport:
    psnr_db: float
    ssim: float
    rmse: float


def quality_report(ref, test) -> QualityReport:
    """Bundle PSNR, SSIM and RMSE of `test` against the reference."""
    return QualityReport(psnr_db=psnr(ref, test), ssim=ssim(ref, test), rmse=rmse(ref, test))
