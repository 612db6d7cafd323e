"""Exception types raised across the package."""


class RSGError(Exception):
    """Base class for all package errors."""


class ShapeError(RSGError, ValueError):
    """Array dimensions do not agree with the network they parameterize."""


class ParameterError(RSGError, ValueError):
    """A scalar hyperparameter is outside its admissible range."""


class ConfigurationError(RSGError, ValueError):
    """A network or experiment description is internally inconsistent."""


class DataError(RSGError, ValueError):
    """A dataset is empty, malformed or out of range."""


class ParseError(DataError):
    """A data file could not be decoded.

    ``offset`` is the byte (IDX) or line (CSV) position where decoding failed.
    """

    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} (at offset {offset})")
        self.offset = offset


class DivergenceError(RSGError, FloatingPointError):
    """Weights became non-finite during training."""

    def __init__(self, iteration):
        super().__init__(f"non-finite weights after update {iteration}")
        self.iteration = iteration


class ValidationError(RSGError, ValueError):
    """An experiment config failed validation; ``problems`` lists every violation."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid config:\n  " + "\n  ".join(self.problems))
