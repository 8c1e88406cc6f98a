class EarCapError(Exception):
    """Base class for pipeline errors that carry a user-facing diagnostic."""


class InputError(EarCapError, ValueError):
    pass


class ParseError(InputError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ":".join(str(p) for p in (path, line) if p is not None)
        super().__init__(f"{where}: {message}" if where else message)


class AlignmentError(InputError):
    pass


class EmptySessionError(InputError):
    pass


class InsufficientDataError(InputError):
    pass


class TrainingError(EarCapError):
    pass


class CalibrationError(EarCapError):
    pass


class StateError(EarCapError):
    pass


class ProtocolError(EarCapError):
    pass


class FormatVersionError(EarCapError):
    pass
