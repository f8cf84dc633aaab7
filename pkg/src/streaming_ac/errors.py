"""Exception types raised by the runtime."""


class StreamingACError(Exception):
    """Base class for all runtime errors."""


class DimensionError(StreamingACError, ValueError):
    pass


class EmptyOutputError(StreamingACError, ValueError):
    pass


class ConfigurationError(StreamingACError, ValueError):
    pass


class InvalidMaskError(StreamingACError, ValueError):
    pass


class ChunkingError(StreamingACError, ValueError):
    pass


class StateError(StreamingACError, RuntimeError):
    pass


class MisuseError(StreamingACError, RuntimeError):
    pass


class DegenerateInputError(StreamingACError, ValueError):
    pass


class FormatError(StreamingACError, ValueError):
    pass
