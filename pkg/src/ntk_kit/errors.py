"""Exception and warning types shared across the package."""


class NtkKitError(Exception):
    """Base class for all package-specific errors."""


class NumericalFailure(NtkKitError):
    """A numeric routine produced non-finite values or failed to converge."""


class UnknownPreset(NtkKitError):
    """Requested activation preset name is not registered."""


class InvalidRegime(NtkKitError):
    """The requested quantity is undefined for this coefficient regime."""


class NormalizationUndefined(NtkKitError):
    """Depth normalization requires a nonzero linear coefficient."""


class IllConditioned(NtkKitError):
    """Gram system could not be factorized even with maximal jitter."""


class UnsupportedLimit(NtkKitError):
    """Depth-infinity kernel limit is not defined for this dual."""


class SingularStructure(NtkKitError):
    """Structured two-parameter matrix is singular (equal diagonal and off-diagonal)."""


class SpecInvalid(NtkKitError):
    """A distribution descriptor violates its own declared envelope or bounds."""


class MalformedDataset(NtkKitError):
    """Dataset rows violate the on-sphere/label contract.

    Carries the offending row index when known.
    """

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class ConfigError(NtkKitError):
    """Experiment configuration is malformed or inconsistent."""


class TruncationWarning(UserWarning):
    """Series truncation left more than 1% of the activation's mass unaccounted."""
