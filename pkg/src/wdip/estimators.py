"""scikit-learn style front-ends.

``WienerGuidedDIP`` fits one blurry image (blind deconvolution has no
training set): ``fit`` estimates the sharp image and the kernel,
``fit_transform`` returns the sharp estimate, and ``transform`` applies the
estimated kernel to further images by Wiener deconvolution.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .bench import recombine, to_y_channel
from .imagefreq import check_image, check_kernel, per_channel, uniform_kernel, wiener_deconvolve
from .kernel_init import KernelInitSpec, dataset_sigma, init_kernel
from .metrics import psnr
from .objective import HQSWeights
from .solver import HQSSolver, SolveConfig


def _luma(X):
    x = check_image(X)
    if x.ndim == 3:
        y, chroma = to_y_channel(x)
        return y, chroma
    return x, None


class WienerGuidedDIP(TransformerMixin, BaseEstimator):
    """Blind deconvolution with Wiener-guided deep image priors.

    Colour input is deblurred on the luma channel only; chroma is carried
    over unchanged. ``mode="selfdeblur"`` drops the guidance terms and the
    auxiliary-kernel updates.
    """

    def __init__(self, kernel_size=15, iterations=5000, mode="wdip", alpha=1e-3, beta=1e-4, lam=1e-3,
                 wiener_c=0.025, ssim_switch_iter=1000, lr_net=1e-4, lr_image=None, lr_kernel=1e-6,
                 profile="reference", seed=0, kernel_init="psd", mass_fraction=0.9, sigma_k=None,
                 snapshot_stride=0):
        self.kernel_size = kernel_size
        self.iterations = iterations
        self.mode = mode
        self.alpha = alpha
        self.beta = beta
        self.lam = lam
        self.wiener_c = wiener_c
        self.ssim_switch_iter = ssim_switch_iter
        self.lr_net = lr_net
        self.lr_image = lr_image
        self.lr_kernel = lr_kernel
        self.profile = profile
        self.seed = seed
        self.kernel_init = kernel_init
        self.mass_fraction = mass_fraction
        self.sigma_k = sigma_k
        self.snapshot_stride = snapshot_stride

    def _initial_kernel(self, y):
        n = self.kernel_size
        if isinstance(self.kernel_init, str):
            if self.kernel_init == "uniform":
                return uniform_kernel(n), None
            if self.kernel_init != "psd":
                raise ValueError(f"kernel_init must be 'psd', 'uniform' or an array, got {self.kernel_init!r}")
            if self.sigma_k is not None:
                spec = KernelInitSpec(float(self.sigma_k), n)
            else:
                spec = dataset_sigma([y], [n], self.mass_fraction)
            return init_kernel(spec, n), spec
        return check_kernel(self.kernel_init), None

    def solve_config(self, aux_init=None):
        weights = HQSWeights(self.alpha, self.beta, self.lam, self.wiener_c, self.ssim_switch_iter)
        return SolveConfig(iterations=self.iterations, kernel_size=self.kernel_size, weights=weights,
                           seed=self.seed, mode=self.mode, aux_kernel_init=aux_init, profile=self.profile,
                           lr_net=self.lr_net, lr_image=self.lr_image, lr_kernel=self.lr_kernel,
                           snapshot_stride=self.snapshot_stride)

    def fit(self, X, y=None, callback=None):
        lum, chroma = _luma(X)
        k0, spec = self._initial_kernel(lum)
        self.solver_ = HQSSolver(self.solve_config(k0), lum)
        sharp, kernel, aux = self.solver_.run(callback)
        self.trace_ = self.solver_.trace
        self.trace_.aux_kernel = aux
        self.kernel_spec_ = spec
        self.initial_kernel_ = k0
        self.luma_ = sharp
        self.image_ = sharp if chroma is None else np.clip(recombine(sharp, chroma), 0, 1)
        self.kernel_ = kernel
        self.aux_kernel_ = aux
        self.n_iter_ = self.solver_.iteration
        return self

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y, **fit_params).image_

    def transform(self, X):
        """Wiener-deconvolve ``X`` with the estimated kernel (per channel, unclamped)."""
        check_is_fitted(self, "kernel_")
        x = check_image(X)
        return per_channel(wiener_deconvolve, x, self.kernel_, self.wiener_c)

    def score(self, X, y):
        """PSNR of the fitted estimate against the ground truth ``y``."""
        check_is_fitted(self, "image_")
        return psnr(self.image_, check_image(y))


class PSDKernelInitializer(BaseEstimator):
    """Dataset-level Gaussian kernel initializer driven by the power spectrum."""

    def __init__(self, mass_fraction=0.9):
        self.mass_fraction = mass_fraction

    def fit(self, X, kernel_sizes):
        images = [check_image(x, channels=(1, 3)) for x in X]
        images = [to_y_channel(x)[0] if x.ndim == 3 else x for x in images]
        if np.ndim(kernel_sizes) == 0:
            kernel_sizes = [int(kernel_sizes)] * len(images)
        self.spec_ = dataset_sigma(images, list(kernel_sizes), self.mass_fraction)
        self.sigma_k_ = self.spec_.sigma_k
        self.per_image_sigmas_ = np.asarray(self.spec_.per_image_sigmas)
        return self

    def make_kernel(self, kernel_size):
        check_is_fitted(self, "spec_")
        return init_kernel(self.spec_, kernel_size)
