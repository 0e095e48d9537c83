"""Exception hierarchy shared by all avjoint modules."""


class AvjointError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(AvjointError):
    """An operation received data that violates its preconditions."""


class InvalidConfig(AvjointError):
    """A configuration object or file is inconsistent or out of range."""


class InvalidState(AvjointError):
    """An operation was called in the wrong order (e.g. backward without forward)."""


class NumericalError(AvjointError):
    """Non-finite values where finite ones are required."""


class TrainingError(AvjointError):
    """Training diverged or could not proceed; carries epoch/batch context."""


class FormatError(AvjointError):
    """A binary or text artifact does not conform to its declared format.

    Attributes:
        offset: byte offset at which parsing failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
