"""Exception types raised across the detection toolkit."""


class CmfdError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(CmfdError, ValueError):
    """A tunable is outside its admissible range."""


class DimensionError(CmfdError, ValueError):
    """Array shapes are incompatible with the requested operation."""


class ValidationError(CmfdError, ValueError):
    """User-supplied specification (forgery spec, corpus, manifest) is invalid."""


class ImageFormatError(CmfdError):
    """An image file exists but cannot be decoded."""


class NumericalError(CmfdError, ArithmeticError):
    """A numerical routine failed to converge."""


class ConfigError(CmfdError, ValueError):
    """A configuration file or override is malformed."""
