"""Evaluation metrics: PSNR, SSIM, error ratio, Otsu segmentation and Dice."""

import math
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import DegenerateInputError
from .imagefreq import wiener_deconvolve
from .objective import ssim as _ssim

BINS = 256
ERROR_RATIO_EPS = 1e-12


@dataclass
class MetricReport:
    id: str
    seed: int
    psnr: float
    ssim: float
    error_ratio: float = None
    dice: float = None

    def to_dict(self):
        return asdict(self)


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(estimate, truth):
    """PSNR in dB for images in [0, 1]; ``inf`` when they are identical."""
    a, b = _pair(estimate, truth)
    # exactly rounded sum keeps constant-error cases exact at any image size
    err = math.fsum(((a - b) ** 2).ravel()) / a.size
    if err == 0:
        return math.inf
    return float(10 * np.log10(1.0 / err))


def ssim(estimate, truth):
    a, b = _pair(estimate, truth)
    if a.ndim != 2:
        raise ValueError("ssim expects single-channel images")
    return float(_ssim(a, b))


def best_shift_ssd(estimate, truth, max_shift):
    """Smallest SSD over integer circular shifts of ``estimate`` within +-max_shift."""
    a, b = _pair(estimate, truth)
    best = math.inf
    for dy in range(-max_shift, max_shift + 1):
        for dx in range(-max_shift, max_shift + 1):
            best = min(best, float(np.sum((np.roll(a, (dy, dx), axis=(0, 1)) - b) ** 2)))
    return best


def error_ratio(blurred, truth, estimated_kernel, true_kernel, c=0.025, max_shift=None):
    """SSD of the deconvolution with the estimated kernel over that with the true kernel.

    Both deconvolutions use the same Wiener filter at constant ``c``; each is
    compared to ``truth`` at its best integer translation.
    """
    if max_shift is None:
        max_shift = max(np.shape(estimated_kernel)[0], np.shape(true_kernel)[0]) // 2
    num = best_shift_ssd(wiener_deconvolve(blurred, estimated_kernel, c), truth, max_shift)
    den = best_shift_ssd(wiener_deconvolve(blurred, true_kernel, c), truth, max_shift)
    return (num + ERROR_RATIO_EPS) / (den + ERROR_RATIO_EPS)


def clip_extremes(image, percentiles=(1, 99)):
    a = np.asarray(image, dtype=np.float64)
    lo, hi = np.percentile(a, percentiles)
    return np.clip(a, lo, hi)


def otsu_threshold(image, bins=BINS):
    """Threshold maximizing the between-class variance of a ``bins``-bin histogram.

    Returns the upper edge of the last bin assigned to the lower class, so
    ``image > threshold`` selects the upper class.
    """
    a = np.asarray(image, dtype=np.float64).ravel()
    lo, hi = a.min(), a.max()
    if hi <= lo:
        raise DegenerateInputError("cannot threshold a constant image")
    hist, edges = np.histogram(a, bins=bins, range=(lo, hi))
    centers = 0.5 * (edges[:-1] + edges[1:])
    p = hist / hist.sum()
    w0 = np.cumsum(p)
    m0 = np.cumsum(p * centers)
    mt = m0[-1]
    w1 = 1 - w0
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mt * w0 - m0) ** 2 / (w0 * w1)
    between[~np.isfinite(between)] = -1
    between[-1] = -1
    return float(edges[int(np.argmax(between)) + 1])


def segment(image, percentiles=(1, 99)):
    clipped = clip_extremes(image, percentiles)
    return clipped > otsu_threshold(clipped)


def dice(mask_a, mask_b):
    a = np.asarray(mask_a, dtype=bool)
    b = np.asarray(mask_b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    total = a.sum() + b.sum()
    if total == 0:
        return 1.0
    return float(2 * np.logical_and(a, b).sum() / total)


def segmentation_dice(estimate, truth, percentiles=(1, 99)):
    """Clip, Otsu-threshold and compare; each image is clipped independently."""
    return dice(segment(estimate, percentiles), segment(truth, percentiles))
