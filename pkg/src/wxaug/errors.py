"""Exception hierarchy.

Everything raised for bad input derives from :class:`DataError`, which the
command line maps to exit code 2. Detector process failures map to 3.
"""


class WxaugError(Exception):
    pass


class DataError(WxaugError, ValueError):
    pass


class InvalidDimensionError(DataError):
    pass


class InvalidParameterError(DataError):
    pass


class FieldMismatchError(DataError):
    pass


class PPMError(DataError):
    pass


class WrongMagicError(PPMError):
    pass


class UnsupportedMaxvalError(PPMError):
    pass


class TruncatedPayloadError(PPMError):
    pass


class InvalidInputError(DataError):
    pass


class InconsistentInputError(DataError):
    pass


class UndefinedMetricError(DataError):
    pass


class PlacementError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number

    def __reduce__(self):
        return (ParseError, (self.args[0], None), {"line_number": self.line_number})


class WireError(DataError):
    pass


class DetectorFailedError(WxaugError):
    def __init__(self, message, stderr=""):
        super().__init__(message)
        self.stderr = stderr

    def __reduce__(self):
        return (DetectorFailedError, (self.args[0], self.stderr))


class SweepError(WxaugError):
    """A sweep cell failed; ``param`` and ``repeat`` identify it."""

    def __init__(self, param, repeat, cause):
        super().__init__(f"sweep cell param={param!r} repeat={repeat} failed: {cause}")
        self.param = param
        self.repeat = repeat
        self.cause = cause

    def __reduce__(self):
        return (SweepError, (self.param, self.repeat, self.cause))
