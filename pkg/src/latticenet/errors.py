"""Exception hierarchy shared by all latticenet modules."""


class LatticeNetError(Exception):
    pass


class DimensionError(LatticeNetError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ConfigurationError(LatticeNetError, ValueError):
    """A hyperparameter combination cannot produce a valid computation."""


class InputError(LatticeNetError, ValueError):
    """Runtime input (labels, stream count, ...) violates a precondition."""


class UsageError(LatticeNetError, RuntimeError):
    """An API was called in a state it does not support."""


class FormatError(LatticeNetError, ValueError):
    """A binary file does not match its declared layout."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class CorruptionError(FormatError):
    """A structurally valid record carries an impossible value."""


class ConsistencyError(LatticeNetError, ValueError):
    """Two inputs that must agree (paired files, report provenance) do not."""


class DivergenceError(LatticeNetError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
