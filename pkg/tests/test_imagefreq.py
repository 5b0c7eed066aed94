import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from wdip.exceptions import DimensionError, SingularKernelError
from wdip.imagefreq import (
    check_image,
    check_kernel,
    circular_convolve,
    delta_kernel,
    embed_kernel,
    gaussian_kernel,
    kernel_spectrum,
    per_channel,
    uniform_kernel,
    wiener_deconvolve,
)
from wdip.metrics import psnr

from conftest import wraparound_convolve


class TestValidation:
    def test_rejects_tiny_images(self):
        with pytest.raises(DimensionError):
            check_image(np.zeros((4, 4)))

    def test_rejects_nan(self):
        img = np.zeros((16, 16))
        img[3, 3] = np.nan
        with pytest.raises(ValueError):
            check_image(img)

    def test_rejects_even_kernel(self):
        with pytest.raises(DimensionError):
            check_kernel(np.ones((4, 4)) / 16)

    def test_rejects_unnormalized_when_asked(self):
        with pytest.raises(ValueError):
            check_kernel(np.ones((3, 3)), normalized=True)

    def test_kernel_constructors_sum_to_one(self):
        for k in (delta_kernel(5), gaussian_kernel(9, 1.5), gaussian_kernel(9, 1.0, 3.0, 0.4), uniform_kernel(7)):
            assert k.sum() == pytest.approx(1.0, abs=1e-12)


class TestCircularConvolve:
    def test_delta_is_identity(self, rng):
        img = rng.random((16, 12))
        np.testing.assert_allclose(circular_convolve(img, delta_kernel(1)), img, atol=1e-12)
        np.testing.assert_allclose(circular_convolve(img, delta_kernel(5)), img, atol=1e-12)

    def test_constant_is_preserved(self, rng):
        k = rng.random((5, 5))
        k /= k.sum()
        out = circular_convolve(np.full((16, 16), 0.37), k)
        np.testing.assert_allclose(out, 0.37, atol=1e-12)

    def test_matches_wraparound_loop(self, rng):
        for _ in range(10):
            img = rng.random((8, 8))
            k = rng.random((3, 3))
            k /= k.sum()
            np.testing.assert_allclose(circular_convolve(img, k), wraparound_convolve(img, k), atol=1e-8)

    def test_rectangular_image(self, rng):
        img = rng.random((9, 13))
        k = gaussian_kernel(5, 1.0, 2.0, 0.3)
        np.testing.assert_allclose(circular_convolve(img, k), wraparound_convolve(img, k), atol=1e-8)

    def test_tensor_path_matches_numpy(self, rng):
        img = rng.random((16, 16))
        k = gaussian_kernel(5, 1.2)
        out = circular_convolve(torch.as_tensor(img), torch.as_tensor(k))
        assert isinstance(out, torch.Tensor)
        np.testing.assert_allclose(out.numpy(), circular_convolve(img, k), atol=1e-12)

    def test_kernel_larger_than_image(self):
        with pytest.raises(DimensionError):
            circular_convolve(np.zeros((8, 8)), uniform_kernel(9))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.sampled_from([1, 3, 5]))
    def test_commutes_with_circular_shift(self, seed, n):
        r = np.random.default_rng(seed)
        img = r.random((8, 10))
        k = r.random((n, n))
        k /= k.sum()
        a = circular_convolve(np.roll(img, (2, 3), axis=(0, 1)), k)
        b = np.roll(circular_convolve(img, k), (2, 3), axis=(0, 1))
        np.testing.assert_allclose(a, b, atol=1e-10)


class TestEmbedKernel:
    def test_delta_has_flat_spectrum(self):
        spec = np.fft.fft2(embed_kernel(delta_kernel(5), 16, 16))
        np.testing.assert_allclose(np.abs(spec), 1.0, atol=1e-12)

    def test_fft_path_equals_convolution(self, rng):
        img = rng.random((8, 8))
        k = rng.random((3, 3))
        k /= k.sum()
        via_embed = np.fft.ifft2(np.fft.fft2(img) * np.fft.fft2(embed_kernel(k, 8, 8))).real
        np.testing.assert_allclose(via_embed, circular_convolve(img, k), atol=1e-8)

    def test_full_size_embedding_keeps_mass(self, rng):
        k = rng.random((9, 9))
        field = embed_kernel(k, 9, 9)
        assert field.sum() == pytest.approx(k.sum())
        np.testing.assert_allclose(np.sort(field.ravel()), np.sort(k.ravel()))
        assert field[0, 0] == k[4, 4]

    def test_spectrum_of_symmetric_kernel_is_real(self):
        spec = kernel_spectrum(gaussian_kernel(7, 1.3), 32, 32)
        assert np.abs(np.imag(spec)).max() < 1e-12


class TestWiener:
    def test_delta_zero_c_identity(self, rng):
        img = rng.random((32, 32))
        np.testing.assert_allclose(wiener_deconvolve(img, delta_kernel(5), 0.0), img, atol=1e-10)

    def test_delta_scales_by_one_over_one_plus_c(self, rng):
        img = rng.random((32, 32))
        np.testing.assert_allclose(wiener_deconvolve(img, delta_kernel(5), 0.025), img / 1.025, atol=1e-9)

    def test_noiseless_round_trip(self, scene64):
        k = gaussian_kernel(9, 1.0)
        restored = wiener_deconvolve(circular_convolve(scene64, k), k, 1e-6)
        assert psnr(restored, scene64) >= 40.0

    def test_singular_kernel_without_regularization(self):
        # a 2x2 box (zero-padded to 3x3) has spectral zeros on even grids
        k = np.zeros((3, 3))
        k[1:, 1:] = 0.25
        with pytest.raises(SingularKernelError):
            wiener_deconvolve(np.ones((16, 16)), k, 0.0)

    def test_negative_c_rejected(self):
        with pytest.raises(ValueError):
            wiener_deconvolve(np.ones((16, 16)), delta_kernel(3), -1.0)

    def test_gradient_flows_to_kernel(self, rng):
        img = torch.as_tensor(rng.random((16, 16)))
        k = torch.as_tensor(gaussian_kernel(5, 1.0)).requires_grad_(True)
        wiener_deconvolve(img, k, 0.025).sum().backward()
        assert torch.isfinite(k.grad).all()

    def test_per_channel_colour(self, rng):
        img = rng.random((16, 16, 3))
        out = per_channel(wiener_deconvolve, img, delta_kernel(3), 0.0)
        np.testing.assert_allclose(out, img, atol=1e-10)
