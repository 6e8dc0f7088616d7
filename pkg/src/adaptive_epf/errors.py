"""Exception hierarchy shared by every module of the package."""


class EPFError(Exception):
    """Base class for all errors raised by adaptive_epf."""

    #: exit code used by the command line front-end
    exit_code = 2

    def __init__(self, message="", date=None):
        super().__init__(message)
        self.date = date


# -- data ingestion ---------------------------------------------------------

class DatasetError(EPFError):
    pass


class SchemaError(DatasetError):
    pass


class GapError(DatasetError):
    pass


class ParseError(DatasetError):
    pass


class InsufficientHistory(EPFError):
    pass


# -- transforms -------------------------------------------------------------

class WindowTooLarge(EPFError, ValueError):
    pass


class MissingParams(EPFError):
    pass


class EmptyTraining(EPFError, ValueError):
    pass


# -- LEAR -------------------------------------------------------------------

class LagUnavailable(EPFError):
    pass


class NonFinite(EPFError, ValueError):
    pass


class TooFewRows(EPFError, ValueError):
    pass


# -- evaluation -------------------------------------------------------------

class DateMismatch(EPFError):
    pass


class MissingNaiveHistory(EPFError):
    pass


class DegenerateVariance(EPFError):
    exit_code = 3


class DivisionByZero(EPFError, ZeroDivisionError):
    exit_code = 3
