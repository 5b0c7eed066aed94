class WDIPError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(WDIPError, ValueError):
    pass


class SingularKernelError(WDIPError, ValueError):
    """Kernel spectrum has (near) zero bins and no regularization was given."""


class DegenerateInputError(WDIPError, ValueError):
    """Input carries no usable signal (constant image, zero power, ...)."""


class OptimizationAborted(WDIPError, RuntimeError):
    """A run produced a non-finite loss. ``trace`` holds the partial record."""

    def __init__(self, message, trace=None, iteration=None):
        super().__init__(message)
        self.trace = trace
        self.iteration = iteration
