"""Exception types shared across the package."""


class CompletionError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(CompletionError, ValueError):
    pass


class DegenerateInputError(InvalidArgumentError):
    pass


class EmptyProjectionError(InvalidArgumentError):
    """Every point fell outside the camera frustum."""


class ShapeError(CompletionError, ValueError):
    pass


class FormatError(CompletionError):
    """A binary file could not be decoded.

    ``offset`` is the byte position where decoding failed.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
