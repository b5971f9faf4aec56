"""Exception types raised across kenforge."""


class KenforgeError(Exception):
    """Base class for all kenforge errors."""


class ContainerError(KenforgeError, ValueError):
    """A KENC/KENM file is malformed.

    ``tensor`` and ``offset`` locate the problem when known; ``offset`` is an
    absolute byte position in the file.
    """

    def __init__(self, message, tensor=None, offset=None):
        self.tensor = tensor
        self.offset = offset
        where = []
        if tensor is not None:
            where.append(f"tensor {tensor!r}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class EvaluatorError(KenforgeError):
    """An evaluator failed while scoring the pruned model for a given k."""

    def __init__(self, message, k=None):
        self.k = k
        if k is not None:
            message = f"evaluator failed at k={k}: {message}"
        super().__init__(message)


class AnnotationError(KenforgeError, ValueError):
    """Invalid annotation input (bad label, duplicate vote, missing column)."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
