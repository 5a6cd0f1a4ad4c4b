class RevforgeError(Exception):
    """Base class for errors that map to a data/config exit code."""


class ConfigError(RevforgeError, ValueError):
    pass


class DataError(RevforgeError, ValueError):
    pass


class DumpStreamError(DataError):
    """The dump ended in the middle of a page."""


class DecodeError(RevforgeError, RuntimeError):
    pass


class ScorerError(DecodeError):
    pass


class M2FormatError(DataError):
    pass
