"""Exception types shared across the package."""


class E2OError(Exception):
    """Base class for all package errors."""


class ShapeError(E2OError):
    """An array argument has the wrong width or length."""


class ConfigError(E2OError):
    """A configuration value is out of range or inconsistent."""


class StateError(E2OError):
    """An operation was called on an object in the wrong state."""


class DiagnosticError(E2OError):
    """A numeric quantity went non-finite; carries context for debugging."""


class GenerationError(E2OError):
    """Dataset/reference-policy generation failed to meet its quality bar."""


class FormatError(E2OError):
    """A binary file is malformed or has an unexpected magic/version."""
