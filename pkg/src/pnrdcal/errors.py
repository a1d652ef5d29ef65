"""Exception hierarchy shared across the toolkit."""


class CalibrationError(Exception):
    """Base class for all errors raised by pnrdcal."""


class DimensionError(CalibrationError, ValueError):
    """Matrix shapes do not agree with the global photon-number truncation."""


class NormalizationError(CalibrationError, ValueError):
    """A probability vector or matrix is not normalized within tolerance."""


class UndefinedEstimateError(CalibrationError, ZeroDivisionError):
    """An estimate is undefined for the given input (e.g. a zero singles rate)."""


class AmbiguousEstimateError(CalibrationError):
    """The residual is flat, so some efficiencies are not identifiable.

    The best-effort result is attached as ``result``.
    """

    def __init__(self, unidentifiable, result=None):
        self.unidentifiable = tuple(unidentifiable)
        self.result = result
        super().__init__(
            "objective is flat along: " + ", ".join(self.unidentifiable)
        )


class SingularResponseError(CalibrationError, ArithmeticError):
    """A detector response matrix cannot be inverted on the square truncation."""
