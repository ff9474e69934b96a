"""Exception hierarchy. Each class maps to one CLI exit code."""


class QfiRixsError(Exception):
    exit_code = 1


class DomainError(QfiRixsError, ValueError):
    """Input outside the mathematical domain of an operation."""

    exit_code = 3


class LoadError(QfiRixsError, ValueError):
    """A file could not be parsed or failed validation."""

    exit_code = 3


class ConfigError(QfiRixsError, ValueError):
    exit_code = 2


class ResourceError(QfiRixsError, MemoryError):
    """A dense dimension exceeds the configured cap."""

    exit_code = 4
