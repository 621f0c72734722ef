"""Exception types raised by the numerical routines."""


class ConvergenceError(RuntimeError):
    """An iterative method stopped before meeting its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class GammaConvergenceError(ConvergenceError):
    """The fixed-point iteration defining Gamma did not contract."""

    def __init__(self, message, contraction_factor, residual, iterations):
        super().__init__(message, residual=residual, iterations=iterations)
        self.contraction_factor = contraction_factor


class SpectralRangeError(ValueError):
    """A spectral query reaches beyond the reliably computed eigenvalues."""


class TailEnergyError(ValueError):
    """A field is not represented by the computed eigenbasis to the required accuracy."""

    def __init__(self, message, tail):
        super().__init__(message)
        self.tail = tail


class BlowupError(FloatingPointError):
    """An evolution produced non-finite values; ``last_state`` is the last good state."""

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class ContractionError(RuntimeError):
    """The Picard map was not observed to contract."""

    def __init__(self, message, lipschitz):
        super().__init__(message)
        self.lipschitz = lipschitz
