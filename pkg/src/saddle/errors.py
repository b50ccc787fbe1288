"""Exception types shared across the package."""


class SaddleError(Exception):
    """Base class for errors raised by this package."""


class InvalidTopologyError(SaddleError, ValueError):
    """Topology parameters cannot produce a valid mixing matrix."""


class InfeasiblePartitionError(SaddleError, ValueError):
    """Requested partition cannot give every agent at least one sample."""


class IndexWidthError(SaddleError, ValueError):
    """A sparse payload block is too long for 16-bit index encoding."""


class ConfigError(SaddleError, ValueError):
    """Config file violates the schema or cross-field constraints."""


class DivergenceError(SaddleError, ArithmeticError):
    """Non-finite parameters were produced during a run."""
