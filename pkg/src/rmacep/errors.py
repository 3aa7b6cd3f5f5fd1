"""Exception hierarchy shared by every module."""


class RmaError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(RmaError):
    pass


class StreamFormatError(RmaError):
    pass


class ParseError(RmaError):
    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at offset {position})"
        super().__init__(message)


class FormulaError(RmaError):
    """Raised when a formula cannot be evaluated on its arguments."""


class NotBounded(RmaError):
    def __init__(self, diagnostics):
        self.diagnostics = diagnostics
        super().__init__("; ".join(d.message for d in diagnostics) or "expression is not bounded")


class NoEligibleTransition(RmaError):
    pass


class RegisterCoverageError(RmaError):
    """An empty register was read while evaluating a guard."""


class ResourceExhausted(RmaError):
    def __init__(self, live: int, limit: int):
        self.live = live
        self.limit = limit
        super().__init__(f"{live} live configurations exceed the limit of {limit}")


class NoAcceptingWalk(RmaError):
    pass


class NotUnrolled(RmaError):
    pass


class RegisterNotFound(RmaError):
    pass


class OracleCapExceeded(RmaError):
    pass
