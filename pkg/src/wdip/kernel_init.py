"""Image-adaptive Gaussian initialization of the auxiliary kernel.

The blurrier an image, the more of its spectral power sits near DC. We find
the half-width ``Q`` of the DC-centred square holding a fraction ``t`` of the
(non-DC) power, turn a frequency-domain Gaussian of std ``Q`` into a spatial
field, and measure that field's spatial spread inside the kernel window.
Averaging the spread over a dataset (normalized by each image's kernel
size) gives one dimensionless width ``sigma_k``; the kernel for an image with
size estimate ``n`` is then a Gaussian of std ``sigma_k * n`` pixels.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateInputError, DimensionError
from .imagefreq import check_image, gaussian_kernel

DEFAULT_MASS_FRACTION = 0.9
MIN_KERNEL_STD = 0.5


@dataclass(frozen=True)
class PSDEstimate:
    q: int
    t: float
    total_power: float


@dataclass
class KernelInitSpec:
    sigma_k: float
    kernel_size: int
    per_image_sigmas: list = field(default_factory=list)

    def __post_init__(self):
        if not self.sigma_k > 0:
            raise ValueError(f"sigma_k must be positive, got {self.sigma_k}")
        if self.kernel_size % 2 == 0:
            raise DimensionError("kernel_size must be odd")


def _centered_power(image):
    spec = np.fft.fftshift(np.fft.fft2(image))
    power = np.abs(spec) ** 2
    h, w = power.shape
    cy, cx = h // 2, w // 2
    power[cy, cx] = 0.0
    return power, cy, cx


def psd_radius(image, t=DEFAULT_MASS_FRACTION):
    """Smallest half-width ``Q`` of a DC-centred square holding ``>= t`` of the power.

    The DC bin is excluded from both the enclosed and the total power.
    """
    x = check_image(image, channels=(1,))
    if not 0 < t < 1:
        raise ValueError(f"mass fraction must lie in (0, 1), got {t}")
    power, cy, cx = _centered_power(x)
    total = power.sum()
    if total <= 1e-20 * max(1.0, float(np.sum(x**2))):
        raise DegenerateInputError("image has no power outside DC")
    h, w = x.shape
    qmax = min(h, w) // 2
    # Chebyshev distance from DC turns each square into a threshold test
    dy = np.abs(np.arange(h) - cy)[:, None]
    dx = np.abs(np.arange(w) - cx)[None, :]
    cheb = np.maximum(dy, dx)
    mass = np.bincount(cheb.ravel(), weights=power.ravel())
    enclosed = np.cumsum(mass) / total
    hits = np.nonzero(enclosed >= t * (1 - 1e-12))[0]
    q = int(hits[0]) if hits.size else qmax
    q = int(np.clip(q, 1, qmax))
    return PSDEstimate(q=q, t=float(t), total_power=float(total))


def spatial_gaussian_from_radius(q, height, width):
    """Inverse FFT of a DC-centred Gaussian with std ``q`` frequency bins.

    Returned field is centred at ``(height // 2, width // 2)``, clipped to be
    nonnegative and normalized to unit sum.
    """
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if height < 1 or width < 1:
        raise DimensionError("height and width must be positive")
    fy = np.fft.fftfreq(height) * height
    fx = np.fft.fftfreq(width) * width
    surface = np.exp(-0.5 * (fy[:, None] ** 2 + fx[None, :] ** 2) / q**2)
    g = np.fft.fftshift(np.fft.ifft2(surface).real)
    g = np.clip(g, 0, None)
    return g / g.sum()


def center_crop(field_, n):
    h, w = field_.shape
    if n > min(h, w):
        raise DimensionError(f"crop size {n} exceeds field {h}x{w}")
    y0 = h // 2 - n // 2
    x0 = w // 2 - n // 2
    return field_[y0:y0 + n, x0:x0 + n]


def spatial_std(field_):
    """sqrt of the mean of the two second central moments of a nonnegative field."""
    f = np.asarray(field_, dtype=np.float64)
    f = f / f.sum()
    yy, xx = np.indices(f.shape)
    my = (f * yy).sum()
    mx = (f * xx).sum()
    vy = (f * (yy - my) ** 2).sum()
    vx = (f * (xx - mx) ** 2).sum()
    return float(np.sqrt(0.5 * (vy + vx)))


def image_sigma(image, kernel_size, t=DEFAULT_MASS_FRACTION):
    """``sigma(G) / n`` for one image: PSD radius, spatial Gaussian, crop, measure."""
    x = check_image(image, channels=(1,))
    est = psd_radius(x, t)
    g = spatial_gaussian_from_radius(est.q, *x.shape)
    crop = center_crop(g, kernel_size)
    return spatial_std(crop) / kernel_size


def dataset_sigma(images, kernel_sizes, t=DEFAULT_MASS_FRACTION):
    if len(images) != len(kernel_sizes):
        raise ValueError("images and kernel_sizes must have equal length")
    if not images:
        raise ValueError("need at least one image")
    sigmas = []
    for i, (img, n) in enumerate(zip(images, kernel_sizes)):
        try:
            sigmas.append(image_sigma(img, int(n), t))
        except DegenerateInputError as exc:
            raise DegenerateInputError(f"image {i}: {exc}") from exc
    n0 = int(kernel_sizes[0])
    return KernelInitSpec(sigma_k=float(np.mean(sigmas)), kernel_size=n0, per_image_sigmas=sigmas)


def init_kernel(spec, kernel_size):
    """Isotropic Gaussian of std ``sigma_k * n`` on an ``n x n`` grid, unit sum."""
    n = int(kernel_size)
    if n % 2 == 0:
        raise DimensionError("kernel size must be odd")
    std = spec.sigma_k * n
    if std < MIN_KERNEL_STD:
        warnings.warn(f"kernel std {std:.3g}px is numerically a delta; clamped to {MIN_KERNEL_STD}px")
        std = MIN_KERNEL_STD
    return gaussian_kernel(n, std)
