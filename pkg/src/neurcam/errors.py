"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand dimensions are incompatible."""


class FormatError(ValueError):
    """A file does not follow the expected layout (e.g. ragged CSV rows)."""


class ParseError(ValueError):
    """A cell or token could not be parsed; message carries the location."""


class ConfigError(ValueError):
    """Invalid configuration or flag combination."""


class StateError(RuntimeError):
    """Operation called in a state it does not support."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value."""
