"""Exception types shared across the engine, store, backends, and API."""


class SakugaError(Exception):
    """Base class; carries a machine-readable code for the API layer."""

    code = "error"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class UnknownIdError(SakugaError):
    """A project, node, job, or blob id does not exist."""

    code = "not_found"


class InvalidInputError(SakugaError):
    """Request rejected before touching any state."""

    code = "invalid_request"


class IllegalStateError(SakugaError):
    """Operation not permitted in the target's current state."""

    code = "illegal_state"


class BackendError(SakugaError):
    """Generation backend failed or is unreachable."""

    code = "backend_down"


class CapabilityError(BackendError):
    """Request needs a capability the backend does not declare."""

    code = "capability_missing"


class LogCorruptError(SakugaError):
    """Event log unreadable past a point; replay halts there."""

    code = "log_corrupt"

    def __init__(self, message: str, last_valid_seq: int):
        super().__init__(message)
        self.last_valid_seq = last_valid_seq
