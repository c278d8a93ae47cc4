"""Exception types shared across the codec."""


class MpacError(Exception):
    """Base class for every error raised by this package."""


class RangeError(MpacError, ValueError):
    """A value falls outside its declared domain."""


class EmptyInputError(MpacError, ValueError):
    pass


class StructuralError(MpacError, ValueError):
    """Inconsistent tensor / pyramid structure."""


class StateError(MpacError, RuntimeError):
    pass


class ModelError(MpacError, ValueError):
    """Invalid probability model or CDF."""


class ShapeError(MpacError, ValueError):
    pass


class TrainingDivergenceError(MpacError, ArithmeticError):
    pass


class ConfigError(MpacError):
    """Bad codec configuration (mode, weights, channel count)."""


class CorruptStreamError(MpacError):
    """The bitstream cannot be decoded.

    ``location`` names the section or (scale, group, channel) stream where
    decoding failed, when known.
    """

    def __init__(self, message, location=None):
        if location is not None:
            message = f"{message} [at {location}]"
        super().__init__(message)
        self.location = location


class ModelMismatchError(CorruptStreamError):
    pass


class ParseError(MpacError, ValueError):
    """Malformed input file; ``line`` (1-based) or byte ``offset`` point at the problem."""

    def __init__(self, message, line=None, offset=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.offset = offset
