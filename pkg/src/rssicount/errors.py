class RssiCountError(Exception):
    """Base class for all library errors."""


class TraceError(RssiCountError):
    pass


class ParseError(TraceError):
    pass


class IntegrityError(TraceError):
    pass


class EmptyInputError(TraceError):
    pass


class InsufficientDataError(RssiCountError):
    pass


class ConfigError(RssiCountError):
    pass


class DegenerateDataError(RssiCountError):
    pass


class TrainingError(RssiCountError):
    pass


class DimensionError(RssiCountError):
    pass


class ModelFormatError(RssiCountError):
    pass
