"""Exception types shared across the package."""


class OpmTrackError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(OpmTrackError, ValueError):
    """A point, region, or matrix does not match the expected dimension."""


class UnsupportedRegionError(OpmTrackError):
    """A subset descriptor cannot be evaluated for this possibility variant."""


class ModelError(OpmTrackError):
    """A conditional possibility table violates its normalization contract."""


class IncompatibleObservationError(OpmTrackError):
    """An observation is fully incompatible with the prior (zero normalizer)."""


class NumericError(OpmTrackError):
    """An iterative numerical procedure failed to converge."""


class ReentryError(NumericError):
    """A propagated trajectory dropped below the Earth's surface."""


class FrameError(OpmTrackError):
    """A coordinate frame is degenerate (e.g. radial trajectory has no RIC)."""


class TleFormatError(OpmTrackError, ValueError):
    """A TLE line has the wrong length or structure."""


class TleChecksumError(TleFormatError):
    """A TLE line fails its mod-10 checksum."""

    def __init__(self, line_number: int, expected: int, found: str):
        self.line_number = line_number
        self.expected = expected
        self.found = found
        super().__init__(
            f"line {line_number} checksum mismatch: expected {expected}, found {found!r}"
        )


class TleFieldError(TleFormatError):
    """A TLE field cannot be decoded; names the offending column range."""

    def __init__(self, line_number: int, columns: tuple[int, int], text: str):
        self.line_number = line_number
        self.columns = columns
        super().__init__(
            f"line {line_number} columns {columns[0]}-{columns[1]}: cannot parse {text!r}"
        )


class InsufficientDataError(OpmTrackError, ValueError):
    """Not enough samples to run a calibration."""


class InfeasibleRegionError(OpmTrackError):
    """Admissible-region sampling accepts too few candidates to proceed."""


class ConfigError(OpmTrackError, ValueError):
    """A scenario configuration file is invalid or inconsistent."""
