"""Exception types raised by the library."""


class GdnoError(Exception):
    """Base class for all library errors."""


class InvalidMultiplier(GdnoError, ValueError):
    """A Fourier multiplier took a non-finite value on a grid mode."""


class NonZeroMean(GdnoError, ValueError):
    """Input to the inverse Laplacian has a nonzero mean."""


class StrictConnectednessViolated(GdnoError, ValueError):
    """The fluid layer thickness h + eta drops below h0."""


class DeltaTooLarge(GdnoError, ValueError):
    """Regularizing parameter above the admissibility bound."""


class DeltaOutOfRange(GdnoError, ValueError):
    """Strip parameter outside (0, h0/h)."""


class UnsupportedDiffeo(GdnoError, NotImplementedError):
    """Operation is only available for the trivial straightening map."""


class BottomFluxNonzero(GdnoError, ValueError):
    """Vertical vorticity has nonzero mean on the bottom."""


class DegenerateFit(GdnoError, ValueError):
    """Slope fit needs at least three strictly positive samples."""


class ConfigError(GdnoError, ValueError):
    """Experiment configuration is invalid."""


class NonConvergence(GdnoError, RuntimeError):
    """Fixed-point iteration did not reach its tolerance."""

    def __init__(self, iterations, last_update, what="fixed point"):
        self.iterations = iterations
        self.last_update = last_update
        super().__init__(
            f"{what} did not converge after {iterations} iterations "
            f"(last relative update {last_update:.3e})"
        )


class SolveFailed(GdnoError, RuntimeError):
    """Finite-difference linear solve did not reach its tolerance."""

    def __init__(self, residual):
        self.residual = residual
        super().__init__(f"linear solve failed, relative residual {residual:.3e}")
