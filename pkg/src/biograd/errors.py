"""Exception types raised across the package."""


class BioGradError(Exception):
    """Base class for all package errors."""


class FormatError(BioGradError, ValueError):
    """A file does not follow the expected binary layout."""


class ConfigError(BioGradError, ValueError):
    """A configuration value is unknown, malformed or out of range."""
