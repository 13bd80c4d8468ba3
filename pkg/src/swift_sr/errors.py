"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands or parameters have incompatible shapes."""


class NonFiniteError(ValueError):
    """A tensor contains NaN or Inf where finite values are required.

    ``index`` is the flat NCHW index of the first offending element.
    """

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class FormatError(ValueError):
    """A file (checkpoint or image) does not match its expected format.

    ``offset`` is the byte offset at which parsing failed, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class ConfigError(ValueError):
    """A configuration value or key is invalid."""
