"""Exception types raised across the package."""


class GradNetOTError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(GradNetOTError, ValueError):
    pass


class NotPositiveDefinite(GradNetOTError, ValueError):
    pass


class NoConvergence(GradNetOTError, RuntimeError):
    pass


class NoConvergenceWarning(RuntimeWarning):
    """Emitted when an iterative solver stops at ``max_iter`` and returns its last iterate."""


class NonScalarRoot(GradNetOTError, ValueError):
    pass


class DoubleBackward(GradNetOTError, RuntimeError):
    pass


class UnsupportedActivation(GradNetOTError, ValueError):
    pass


class AllZeroImage(GradNetOTError, ValueError):
    pass


class NonFiniteLoss(GradNetOTError, FloatingPointError):
    def __init__(self, iteration, value):
        super().__init__(f"non-finite loss {value!r} at iteration {iteration}")
        self.iteration = iteration
        self.value = value


class NonFiniteKernel(GradNetOTError, FloatingPointError):
    pass


class ZeroMassRow(GradNetOTError, ValueError):
    pass


class MalformedHeader(GradNetOTError, ValueError):
    pass


class UnsupportedMagic(GradNetOTError, ValueError):
    pass


class IndexOutOfRange(GradNetOTError, IndexError):
    pass


class ConfigError(GradNetOTError, ValueError):
    pass
