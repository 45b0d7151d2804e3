"""Exception types raised by the simulator."""


class BakupError(Exception):
    """Base class for every protocol or configuration error."""


class ZeroAmount(BakupError):
    pass


class InsufficientBalance(BakupError):
    pass


class EventExpired(BakupError):
    pass


class AlreadyTrue(BakupError):
    pass


class NotRedeemable(BakupError):
    pass


class UnknownEvent(BakupError):
    pass


class InsufficientHistory(BakupError):
    pass


class UnknownFeed(BakupError):
    pass


class UnknownAssertion(BakupError):
    pass


class BadInterval(BakupError):
    pass


class RatioMismatch(BakupError):
    pass


class InsufficientLiquidity(BakupError):
    pass


class UnknownPosition(BakupError):
    pass


class SlippageExceeded(BakupError):
    pass


class OutOfRange(BakupError):
    pass


class InterestExceedsRecovery(BakupError):
    pass


class WrongPhase(BakupError):
    pass


class NothingToInvest(BakupError):
    pass


class InvariantViolation(BakupError):
    """Raised by debug-mode checks when a ledger invariant breaks."""


class ConfigError(BakupError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
