"""Exception hierarchy shared across carewatch modules."""


class CareWatchError(Exception):
    """Base class for all domain errors raised by carewatch."""


class ShapeError(CareWatchError, ValueError):
    """A tensor or layer stack has an incompatible shape."""


class DataError(CareWatchError, ValueError):
    """Input data violates a documented format or invariant."""


class TrainingError(CareWatchError, RuntimeError):
    """Training diverged or could not proceed."""


class ModelFormatError(CareWatchError, ValueError):
    """A serialized model document is malformed."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ModelVersionError(ModelFormatError):
    """A serialized model was written by an unsupported format version."""
