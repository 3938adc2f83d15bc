"""Exception types shared across the package."""


class ShapeError(ValueError):
    """An array argument has the wrong dimensionality or incompatible shape."""


class ValidationError(ValueError):
    """An argument violates a value-level contract (bad labels, empty subset, ...)."""


class ConfigError(ValueError):
    """An unsupported pairing or unknown option was requested."""


class TrainingError(RuntimeError):
    """Training produced a non-finite loss.  Carries the offending epoch."""

    def __init__(self, message: str, epoch: int):
        super().__init__(f"{message} (epoch {epoch})")
        self.epoch = epoch


class ParseError(ValueError):
    """A text input (edge list, feature CSV, config file) failed to parse.

    Formats as ``path:line: message`` so editors can jump to the spot.
    """

    def __init__(self, message: str, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:"
        if line is not None:
            prefix += f"{line}:"
        if prefix:
            prefix += " "
        super().__init__(prefix + message)
