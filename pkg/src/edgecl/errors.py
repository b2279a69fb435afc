"""Exception types shared across the package."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values; the operation was aborted."""


class FormatError(ValueError):
    """A binary or manifest file is malformed.

    ``offset`` is the byte position at which parsing failed, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
