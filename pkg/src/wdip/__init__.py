"""Wiener-guided deep image prior for unsupervised blind deconvolution."""

__version__ = "0.1.0"
