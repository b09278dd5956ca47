"""Exception hierarchy shared by every fisherbound module."""

from __future__ import annotations


class FisherBoundError(Exception):
    """Base class. ``op`` and ``theta`` locate a numerical failure when known."""

    def __init__(self, message: str, *, op: str | None = None, theta: float | None = None):
        super().__init__(message)
        self.op = op
        self.theta = theta

    def __str__(self) -> str:
        msg = super().__str__()
        where = []
        if self.op is not None:
            where.append(f"op={self.op}")
        if self.theta is not None:
            where.append(f"theta={self.theta!r}")
        return f"{msg} [{', '.join(where)}]" if where else msg


class DimensionMismatch(FisherBoundError, ValueError):
    pass


class NotPositiveDefinite(FisherBoundError):
    pass


class NonFinite(FisherBoundError, ValueError):
    pass


class MomentOverflow(FisherBoundError, OverflowError):
    pass


class NonPositiveVariance(FisherBoundError, ValueError):
    pass


class OutOfSupport(FisherBoundError, ValueError):
    pass


class UnsupportedStatistic(FisherBoundError, ValueError):
    """A statistic has no closed-form expectation under the requested model."""


class InfeasibleMoments(FisherBoundError, ValueError):
    pass


class RankDeficientWeights(FisherBoundError, ValueError):
    pass


class NonPositiveFisher(FisherBoundError, ValueError):
    pass


class DegenerateStatistic(FisherBoundError):
    pass


class FormatError(FisherBoundError, ValueError):
    def __init__(self, message: str, *, line: int | None = None, field: str | None = None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field '{field}'")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.line = line
        self.field = field


class VersionMismatch(FormatError):
    pass


class EmptyData(FisherBoundError, ValueError):
    pass


class NoRootInBracket(FisherBoundError):
    def __init__(self, message: str, *, g_lo: float, g_hi: float, **kw):
        super().__init__(f"{message} (g(lo)={g_lo!r}, g(hi)={g_hi!r})", **kw)
        self.g_lo = g_lo
        self.g_hi = g_hi


class OutOfGrid(FisherBoundError, ValueError):
    pass


class TrialFailure(FisherBoundError):
    """More than the tolerated fraction of Monte-Carlo trials failed."""

    def __init__(self, message: str, failures: dict[int, str]):
        super().__init__(message, op="asymptotic_check")
        self.failures = failures


class MultipleRootsWarning(UserWarning):
    pass


class DegenerateWeightWarning(UserWarning):
    pass
