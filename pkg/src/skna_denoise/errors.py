"""Exception types raised across the toolkit."""


class SknaError(Exception):
    """Base class for all toolkit errors."""


class InvalidBandError(SknaError, ValueError):
    pass


class EmptySegmentationError(SknaError, ValueError):
    pass


class DegenerateDataError(SknaError, ValueError):
    pass


class ShapeError(SknaError, ValueError):
    pass


class StateError(SknaError, RuntimeError):
    pass


class NonFiniteError(SknaError, FloatingPointError):
    """Non-finite loss or gradient encountered during training."""


class InsufficientSubjectsError(SknaError, ValueError):
    pass


class InsufficientClassError(SknaError, ValueError):
    pass


class InsufficientPairsError(SknaError, ValueError):
    pass


class InvalidOffsetError(SknaError, ValueError):
    pass


class PairingError(SknaError, ValueError):
    pass


class DiscontinuityError(SknaError, ValueError):
    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = list(missing)


class UndefinedCorrelationError(SknaError, ValueError):
    pass


class FormatError(SknaError, ValueError):
    def __init__(self, message, offset=None, record=None):
        where = []
        if record is not None:
            where.append(f"record {record}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.offset = offset
        self.record = record


class ConfigError(SknaError, ValueError):
    pass
