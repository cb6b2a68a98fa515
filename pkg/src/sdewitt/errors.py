"""Exception hierarchy for the sdewitt package."""


class SdewittError(Exception):
    """Base class for all package errors."""


class DomainError(SdewittError):
    """Elementary function applied outside its domain at the jet base value."""


class OrderError(SdewittError):
    """Requested derivative exceeds the truncation order of a jet."""


class SpaceMismatchError(SdewittError):
    """Arithmetic between jets living in different truncation spaces."""


class ParseError(SdewittError):
    """Expression syntax or symbol error; carries the byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class ConfigError(SdewittError):
    """Scenario configuration failed validation."""


class SingularMetricError(SdewittError):
    """Metric determinant vanished at an evaluation point."""


class IntegrationError(SdewittError):
    """Geodesic or transport integration produced non-finite state."""


class ConvergenceError(SdewittError):
    """Newton shooting failed to reach tolerance within max_iter."""


class ConjugatePointError(SdewittError):
    """Conjugate points detected: the transport construction is undefined."""


class SignConventionError(SdewittError):
    """Sign of the van Vleck determinant violates the signature rule."""


class CostGuardError(SdewittError):
    """Recursive transport exceeded the configured cost guard."""


class ExtrapolationError(SdewittError):
    """Richardson extrapolation of a coincidence limit did not converge."""
