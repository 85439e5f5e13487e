"""Exception types shared across the package."""


class FootplanError(Exception):
    """Base class for all package errors."""


class InvalidInputError(FootplanError, ValueError):
    """An operation received non-finite or out-of-range input."""


class DimensionError(FootplanError, ValueError):
    """Plan, spec, or multiplier dimensions are inconsistent."""


class NoDataError(FootplanError):
    """A height-map query found no observed cells in the footprint."""


class DegenerateFitError(FootplanError):
    """Plane fitting received collinear or otherwise degenerate points."""


class MapFormatError(FootplanError, ValueError):
    """A height-map file is malformed.  Carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ConfigError(FootplanError, ValueError):
    """A scenario or problem config file could not be parsed."""
