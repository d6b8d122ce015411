"""Masked image metrics: PSNR (tone-mapped and linear) and SSIM.

PSNR is reported on tone-mapped [0, 1] images (peak 1.0) as image metrics
conventionally are for renderings; the linear-space value is logged next to
it.  Identical images report the 99 dB cap.  SSIM uses the standard 11x11
Gaussian window (sigma 1.5) and is averaged over the mask.
"""

import numpy as np
from scipy.ndimage import gaussian_filter

from .imageio import tonemap

PSNR_CAP = 99.0


def _masked(a, mask):
    if mask.sum() == 0:
        raise ValueError("empty mask")
    return a[mask]


def psnr(a, b, mask, tone=True):
    """Peak signal-to-noise ratio over masked pixels; peak = 1 after tone mapping."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("image shapes differ")
    if tone:
        a, b = tonemap(a), tonemap(b)
    if mask.ndim == a.ndim - 1:
        m3 = np.broadcast_to(mask[..., None], a.shape)
    else:
        m3 = mask
    mse = float(np.mean((_masked(a, m3) - _masked(b, m3)) ** 2))
    if mse <= 0.0:
        return PSNR_CAP
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP)


def ssim(a, b, mask, tone=True):
    """Mean SSIM over the mask, grayscale, 11x11 Gaussian window (sigma 1.5)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("image shapes differ")
    if tone:
        a, b = tonemap(a), tonemap(b)
    if a.ndim == 3:
        a = a.mean(axis=2)
        b = b.mean(axis=2)
    if mask.sum() == 0:
        raise ValueError("empty mask")
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    blur = dict(sigma=1.5, truncate=11.0 / 2.0 / 1.5, mode="reflect")
    mu_a = gaussian_filter(a, **blur)
    mu_b = gaussian_filter(b, **blur)
    var_a = gaussian_filter(a * a, **blur) - mu_a ** 2
    var_b = gaussian_filter(b * b, **blur) - mu_b ** 2
    cov = gaussian_filter(a * b, **blur) - mu_a * mu_b
    smap = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / \
           ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    return float(np.mean(smap[mask]))


def mse(a, b, mask):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if mask.ndim == a.ndim - 1 and a.ndim == 3:
        m = np.broadcast_to(mask[..., None], a.shape)
    else:
        m = mask
    return float(np.mean((_masked(a, m) - _masked(b, m)) ** 2))
