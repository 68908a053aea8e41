"""Exception hierarchy for gridstrength."""


class GridStrengthError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(GridStrengthError):
    """Invalid input data (bad values, dimension mismatch, schema violation)."""


class TopologyError(GridStrengthError):
    """Network graph is disconnected or otherwise ill-formed."""


class SingularMatrixError(GridStrengthError):
    """A matrix that must be invertible / positive definite is not."""


class OperatingPointError(GridStrengthError):
    """Operating point inconsistent with the network or unsupported."""


class AssumptionError(GridStrengthError):
    """A modelling assumption (e.g. identical devices) is violated."""


class BracketError(GridStrengthError):
    """Root bracketing failed: no sign change in the given interval."""


class ConfigError(GridStrengthError):
    """Configuration document is malformed or references unknown entities."""
