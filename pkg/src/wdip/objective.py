"""Loss terms of the Wiener-guided objective.

    total = data + alpha * image_match + beta * kernel_match + lambda * kernel_l2

``data`` is the reconvolution error of the generated pair against the blurry
input (MSE, switching to 1 - SSIM after ``ssim_switch_iter``), ``image_match``
ties the generated image to the Wiener deconvolution under the auxiliary
kernel, ``kernel_match`` ties the generated kernel to the auxiliary kernel
after translation alignment, and ``kernel_l2`` keeps the auxiliary kernel
away from a delta.
"""

from dataclasses import dataclass, fields

import numpy as np
import torch
import torch.nn.functional as F

from .imagefreq import _out, _to_tensor, circular_convolve, wiener_deconvolve

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class HQSWeights:
    alpha: float = 1e-3
    beta: float = 1e-4
    lam: float = 1e-3
    wiener_c: float = 0.025
    ssim_switch_iter: int = 1000

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be nonnegative")


@dataclass
class LossBreakdown:
    data: object
    image_match: object
    kernel_match: object
    kernel_l2: object
    total: object
    shift: tuple = (0, 0)

    def as_floats(self):
        vals = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "shift"}
        vals = {k: float(v.detach()) if isinstance(v, torch.Tensor) else float(v) for k, v in vals.items()}
        return LossBreakdown(shift=tuple(int(s) for s in self.shift), **vals)


def _gaussian_window(size, sigma, dtype):
    r = torch.arange(size, dtype=dtype) - (size - 1) / 2
    g = torch.exp(-0.5 * (r / sigma) ** 2)
    g = g / g.sum()
    return torch.outer(g, g)


def ssim(a, b, data_range=1.0, window=SSIM_WINDOW, sigma=SSIM_SIGMA):
    """Mean SSIM over all valid positions of a Gaussian-weighted window.

    Accepts 2-D arrays or tensors; differentiable for tensors.
    """
    x, as_np = _to_tensor(a)
    y, _ = _to_tensor(b)
    if isinstance(b, torch.Tensor):
        as_np = False
    if x.shape != y.shape or x.dim() != 2:
        raise ValueError(f"ssim expects equal 2-D shapes, got {tuple(x.shape)} and {tuple(y.shape)}")
    y = y.to(x.dtype)
    size = min(window, x.shape[0], x.shape[1])
    size -= 1 - size % 2
    w = _gaussian_window(size, sigma, x.dtype)[None, None]
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    x4 = x[None, None]
    y4 = y[None, None]
    mu_x = F.conv2d(x4, w)
    mu_y = F.conv2d(y4, w)
    sxx = F.conv2d(x4 * x4, w) - mu_x**2
    syy = F.conv2d(y4 * y4, w) - mu_y**2
    sxy = F.conv2d(x4 * y4, w) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (sxx + syy + c2)
    return _out((num / den).mean(), as_np)


def mse(a, b):
    x, as_np = _to_tensor(a)
    y, _ = _to_tensor(b)
    if isinstance(b, torch.Tensor):
        as_np = False
    return _out(((x - y.to(x.dtype)) ** 2).mean(), as_np)


def data_term(gen_image, gen_kernel, blurred, iteration, weights=HQSWeights()):
    """Reconvolution error: MSE before the SSIM switch, 1 - SSIM after it."""
    reblurred = circular_convolve(gen_image, gen_kernel)
    if iteration < weights.ssim_switch_iter:
        return mse(reblurred, blurred)
    return 1 - ssim(reblurred, blurred)


def image_match_term(gen_image, blurred, aux_kernel, weights=HQSWeights()):
    """MSE between the generated image and the Wiener estimate under ``aux_kernel``."""
    return mse(gen_image, wiener_deconvolve(blurred, aux_kernel, weights.wiener_c))


def _signed(idx, n):
    return idx - n if idx > n // 2 else idx


def kernel_shift(reference, movable, rtol=1e-9):
    """Integer displacement of ``movable`` relative to ``reference``.

    Peak of the circular cross-correlation; ties go to the smallest shift
    norm, then to the lexicographically smallest (dy, dx).
    """
    ref = np.asarray(reference.detach() if isinstance(reference, torch.Tensor) else reference, dtype=np.float64)
    mov = np.asarray(movable.detach() if isinstance(movable, torch.Tensor) else movable, dtype=np.float64)
    if ref.shape != mov.shape:
        raise ValueError("kernels must have the same size")
    corr = np.fft.ifft2(np.conj(np.fft.fft2(ref)) * np.fft.fft2(mov)).real
    top = corr.max()
    tol = rtol * max(abs(top), 1e-300)
    ny, nx = corr.shape
    cands = [(_signed(i, ny), _signed(j, nx)) for i, j in zip(*np.nonzero(corr >= top - tol))]
    return min(cands, key=lambda s: (s[0] ** 2 + s[1] ** 2, s))


def align_kernels(reference, movable):
    """Return ``(shift, aligned)`` with ``aligned = roll(movable, -shift)``.

    The shift is a constant for differentiation; ``aligned`` stays on the
    autograd graph of ``movable``.
    """
    shift = kernel_shift(reference, movable)
    if isinstance(movable, torch.Tensor):
        aligned = torch.roll(movable, shifts=(-shift[0], -shift[1]), dims=(0, 1))
    else:
        aligned = np.roll(np.asarray(movable, dtype=np.float64), (-shift[0], -shift[1]), axis=(0, 1))
    return shift, aligned


def kernel_match_term(gen_kernel, aux_kernel, return_shift=False):
    """Sum of squared differences after aligning ``gen_kernel`` onto ``aux_kernel``."""
    shift, aligned = align_kernels(aux_kernel, gen_kernel)
    if isinstance(aligned, torch.Tensor):
        ref = aux_kernel if isinstance(aux_kernel, torch.Tensor) else torch.as_tensor(aux_kernel)
        val = ((aligned - ref.to(aligned.dtype)) ** 2).sum()
    elif isinstance(aux_kernel, torch.Tensor):
        val = ((torch.as_tensor(aligned).to(aux_kernel.dtype) - aux_kernel) ** 2).sum()
    else:
        val = float(((aligned - np.asarray(aux_kernel, dtype=np.float64)) ** 2).sum())
    return (val, shift) if return_shift else val


def kernel_l2(kernel):
    if isinstance(kernel, torch.Tensor):
        return (kernel**2).sum()
    return float((np.asarray(kernel, dtype=np.float64) ** 2).sum())


def total_loss(gen_image, gen_kernel, blurred, aux_kernel, iteration, weights=HQSWeights()):
    """All four terms and their weighted sum."""
    d = data_term(gen_image, gen_kernel, blurred, iteration, weights)
    im = image_match_term(gen_image, blurred, aux_kernel, weights)
    km, shift = kernel_match_term(gen_kernel, aux_kernel, return_shift=True)
    l2 = kernel_l2(aux_kernel)
    total = d + weights.alpha * im + weights.beta * km + weights.lam * l2
    return LossBreakdown(d, im, km, l2, total, shift)
