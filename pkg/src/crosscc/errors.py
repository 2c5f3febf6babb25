"""Exception hierarchy shared by all crosscc modules."""


class CrossccError(Exception):
    """Base class for all library errors."""


class DomainError(CrossccError):
    """An input value lies outside the mathematical domain of an operation."""


class ShapeError(CrossccError):
    """Array arguments have incompatible shapes."""


class FormatError(CrossccError):
    """A file or byte stream does not match its documented format."""


class LoadError(CrossccError):
    """A manifest or metadata file failed validation."""


class ConfigError(CrossccError):
    """A configuration value is unusable (empty dataset, bad mode, ...)."""


class NumericError(CrossccError):
    """A numeric operation degenerated (singular matrix, non-finite values)."""


class ConvergenceError(NumericError):
    """An iteration failed to converge; carries the last iterate."""

    def __init__(self, message, last_xyz=None, last_cct=None):
        super().__init__(message)
        self.last_xyz = last_xyz
        self.last_cct = last_cct


class StateError(CrossccError):
    """An object was used in an invalid state (consumed tape, missing grads)."""


class EstimationError(CrossccError):
    """Illuminant estimation is impossible for this input (no usable pixels)."""
