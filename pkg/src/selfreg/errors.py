"""Exception hierarchy shared by all modules."""


class SelfRegError(Exception):
    """Base class for every error raised by this package."""


class SignalError(SelfRegError, ValueError):
    """A signal violates its shape or value invariants."""


class EntropyUndefinedError(SignalError):
    pass


class InfeasibleNormalizationError(SignalError):
    """Positive mass of a reflection cannot absorb its negative mass."""


class DegenerateIncentiveError(SelfRegError, ValueError):
    """The incentive signal has zero volatility, so it cannot be z-scored."""


class ConstraintViolationError(SelfRegError):
    """An upper bound failed its mean or volatility constraint residual check."""


class DegenerateBoundError(SelfRegError, ValueError):
    """Response or savings denominator is zero: the baseline already equals the bound."""


class DegenerateBaselineError(SelfRegError, ValueError):
    pass


class MismatchError(SelfRegError, ValueError):
    """Two plans are not value permutations of each other, or agent sets differ."""


class UndefinedCorrelationError(SelfRegError, ValueError):
    pass


class BudgetExceededError(SelfRegError):
    pass


class ProtocolViolationError(SelfRegError):
    """The tree decision protocol was driven out of order."""


class InsufficientDataError(SelfRegError, ValueError):
    pass


class ScenarioWindowError(SelfRegError, ValueError):
    pass


class IngestError(SelfRegError, ValueError):
    def __init__(self, message, path=None, row=None):
        self.path = path
        self.row = row
        where = ""
        if path is not None:
            where += f"{path}"
        if row is not None:
            where += f":{row}"
        super().__init__(f"{where}: {message}" if where else message)


class PipelineError(SelfRegError):
    """Wraps a module error with the pipeline stage that raised it."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")


class DuplicatePlanWarning(UserWarning):
    """A generation scheme reproduced the seed plan as a non-seed option."""


class TruncatedSeriesWarning(UserWarning):
    pass
