"""Image/kernel containers and frequency-domain numerics.

Images and kernels are plain arrays: ``numpy.ndarray`` for the public
numerical API and ``torch.Tensor`` inside the optimization loop. Every
function here accepts either; numpy inputs are computed in float64 and
returned as numpy, tensor inputs stay on the autograd graph.

The blur model is circular (periodic) throughout, with the kernel anchored
at its geometric centre ``((n - 1) / 2, (n - 1) / 2)``.
"""

import numpy as np
import torch

from .exceptions import DegenerateInputError, DimensionError, SingularKernelError

MIN_FREQ_SIZE = 8
# relative |F{k}|^2 floor below which c = 0 is refused
SINGULAR_TOL = 1e-12


def _to_tensor(x):
    if isinstance(x, torch.Tensor):
        return x, False
    return torch.as_tensor(np.asarray(x, dtype=np.float64)), True


def _out(t, as_numpy):
    return t.detach().cpu().numpy() if as_numpy else t


def check_image(image, *, min_size=MIN_FREQ_SIZE, channels=(1, 3)):
    """Validate an ``ImageField``: H x W or H x W x 3, finite, at least ``min_size``."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        nch = 1
    elif arr.ndim == 3 and arr.shape[2] in (1, 3):
        nch = arr.shape[2]
        if nch == 1:
            arr = arr[..., 0]
    else:
        raise DimensionError(f"expected H x W or H x W x 3 image, got shape {arr.shape}")
    if nch not in channels:
        raise DimensionError(f"expected {channels} channel(s), got {nch}")
    if arr.shape[0] < min_size or arr.shape[1] < min_size:
        raise DimensionError(f"image must be at least {min_size}x{min_size}, got {arr.shape[:2]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    return arr


def check_kernel(kernel, *, normalized=False, atol=1e-6):
    """Validate a ``Kernel``: square, odd size, finite; optionally nonnegative with unit sum."""
    arr = np.asarray(kernel, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"kernel must be square, got shape {arr.shape}")
    if arr.shape[0] % 2 == 0:
        raise DimensionError(f"kernel size must be odd, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("kernel contains non-finite values")
    if normalized:
        if np.any(arr < 0):
            raise ValueError("normalized kernel has negative entries")
        if abs(arr.sum() - 1.0) > atol:
            raise ValueError(f"kernel sums to {arr.sum():.8g}, expected 1")
    return arr


def normalize_kernel(kernel):
    arr = np.clip(np.asarray(kernel, dtype=np.float64), 0, None)
    s = arr.sum()
    if s <= 0:
        raise DegenerateInputError("kernel has no positive mass")
    return arr / s


def delta_kernel(n=1):
    k = np.zeros((n, n))
    k[n // 2, n // 2] = 1.0
    return k


def gaussian_kernel(n, sigma, sigma_x=None, theta=0.0):
    """Centred n x n Gaussian (optionally anisotropic and rotated), unit sum."""
    if n % 2 == 0:
        raise DimensionError("kernel size must be odd")
    sy = float(sigma)
    sx = float(sigma if sigma_x is None else sigma_x)
    r = np.arange(n) - (n - 1) / 2
    yy, xx = np.meshgrid(r, r, indexing="ij")
    c, s = np.cos(theta), np.sin(theta)
    u = c * xx + s * yy
    v = -s * xx + c * yy
    k = np.exp(-0.5 * ((u / sx) ** 2 + (v / sy) ** 2))
    return k / k.sum()


def uniform_kernel(n):
    return np.full((n, n), 1.0 / (n * n))


def embed_kernel(kernel, height, width):
    """Zero-pad ``kernel`` to ``height x width`` with its centre moved to (0, 0).

    The spectrum of the result, multiplied with an image spectrum, gives
    exactly :func:`circular_convolve`.
    """
    k, as_np = _to_tensor(kernel)
    n = k.shape[-1]
    if k.shape[-2] != n:
        raise DimensionError(f"kernel must be square, got {tuple(k.shape)}")
    if n > min(height, width):
        raise DimensionError(f"kernel size {n} exceeds image size {height}x{width}")
    c = (n - 1) // 2
    out = torch.nn.functional.pad(k, (0, width - n, 0, height - n))
    out = torch.roll(out, shifts=(-c, -c), dims=(-2, -1))
    return _out(out, as_np)


def kernel_spectrum(kernel, height, width):
    """``F{k}`` of the embedded kernel (complex, full H x W)."""
    k, as_np = _to_tensor(kernel)
    return _out(torch.fft.fft2(embed_kernel(k, height, width)), as_np)


def circular_convolve(image, kernel):
    """Periodic convolution of a single-channel image with a centred kernel."""
    x, as_np = _to_tensor(image)
    k, _ = _to_tensor(kernel)
    if as_np and isinstance(kernel, torch.Tensor):
        as_np = False
    if x.dim() != 2:
        raise DimensionError("circular_convolve expects a single-channel H x W image")
    k = k.to(x.dtype)
    h, w = x.shape
    out = torch.fft.ifft2(torch.fft.fft2(x) * kernel_spectrum(k, h, w)).real
    return _out(out, as_np)


def wiener_spectrum(blurred, kernel, c):
    """Spectrum of the Wiener estimate, ``conj(K) Y / (|K|^2 + c)``."""
    y, as_np = _to_tensor(blurred)
    k, _ = _to_tensor(kernel)
    if isinstance(kernel, torch.Tensor):
        as_np = False
    if y.dim() != 2:
        raise DimensionError("wiener_deconvolve expects a single-channel H x W image")
    if c < 0:
        raise ValueError(f"Wiener constant must be nonnegative, got {c}")
    h, w = y.shape
    K = kernel_spectrum(k.to(y.dtype), h, w)
    power = K.real**2 + K.imag**2
    if c == 0:
        pmax = float(power.max().detach())
        if pmax == 0 or float(power.min().detach()) <= SINGULAR_TOL * pmax:
            raise SingularKernelError("kernel spectrum has zero bins; use c > 0")
    spec = torch.conj(K) * torch.fft.fft2(y) / (power + c)
    return _out(spec, as_np)


def wiener_deconvolve(blurred, kernel, c):
    """Wiener deconvolution ``F^-1{ |K|^2/(|K|^2+c) * Y/K }`` (unclamped).

    Evaluated in the algebraically identical conjugate form, which never
    divides by ``K`` itself. Differentiable with respect to both inputs when
    given tensors.
    """
    spec = wiener_spectrum(blurred, kernel, c)
    if isinstance(spec, np.ndarray):
        return np.fft.ifft2(spec).real
    return torch.fft.ifft2(spec).real


def per_channel(fn, image, *args, **kwargs):
    """Apply a single-channel op to each channel of an H x W x C array."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        return fn(arr, *args, **kwargs)
    return np.stack([fn(arr[..., i], *args, **kwargs) for i in range(arr.shape[2])], axis=-1)


def edge_taper(image, kernel):
    """Blend the image borders with a blurred copy to suppress wraparound ringing.

    Weight map follows the normalized autocorrelation of the kernel's row and
    column projections, as in the classic edgetaper routine.
    """
    x = check_image(image, channels=(1,))
    k = check_kernel(kernel)
    h, w = x.shape
    blurred = circular_convolve(x, normalize_kernel(k))

    def ramp(proj, length):
        ac = np.correlate(proj, proj, mode="full")
        ac = ac / ac.max()
        n = len(proj)
        alpha = np.ones(length)
        # ac has length 2n-1; rising half tapers the first/last n-1 samples
        half = ac[: n - 1]
        alpha[: n - 1] = half
        alpha[length - (n - 1):] = half[::-1]
        return alpha

    a = np.outer(ramp(k.sum(axis=1), h), ramp(k.sum(axis=0), w))
    return a * x + (1 - a) * blurred
