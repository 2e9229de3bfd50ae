"""Exception taxonomy, aligned with the CLI exit codes."""


class SuperhedgeError(Exception):
    """Base class for all library errors."""


class ConfigError(SuperhedgeError):
    """Malformed configuration or input file (CLI exit code 2)."""


class ValidationError(SuperhedgeError):
    """An input violates a documented precondition (CLI exit code 3)."""


class InvariantViolation(SuperhedgeError):
    """A mathematical identity that should hold failed numerically (CLI exit code 4)."""


class OverflowLimit(SuperhedgeError):
    """An exponent exceeded the configured safety cap (CLI exit code 5)."""
