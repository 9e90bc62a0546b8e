"""Protocol-level outcomes that end a run without key material."""
import enum


class AbortCause(str, enum.Enum):
    ESTIMATION_NEGATIVE = "EstimationNegative"
    EV_MISMATCH = "EvMismatch"
    MV_FAILURE = "MvFailure"
    POOL_EXHAUSTED = "PoolExhausted"


class ProtocolAbort(Exception):
    """Raised when the protocol must stop; ``cause`` names the abort rule."""

    def __init__(self, cause, detail=""):
        self.cause = AbortCause(cause)
        self.detail = detail
        super().__init__(f"{self.cause.value}: {detail}" if detail else self.cause.value)


class MajorityFailure(ProtocolAbort):
    def __init__(self, detail=""):
        super().__init__(AbortCause.MV_FAILURE, detail)


class PoolExhausted(ProtocolAbort):
    def __init__(self, detail="", accounting=None):
        self.accounting = accounting or {}
        super().__init__(AbortCause.POOL_EXHAUSTED, detail)


class ValidationError(ValueError):
    """Malformed input file or violated data invariant, with its location."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)
