"""Exception hierarchy.

Data errors (bad input) and method errors (a procedure cannot be applied to
an otherwise valid dataset) are kept apart so the CLI can map them to
distinct exit codes.
"""


class CrtWinError(Exception):
    """Base class for all package errors."""


class DataError(CrtWinError, ValueError):
    """Input data violates the event-log or dataset contract."""


class ParseError(DataError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class MixedArmCluster(DataError):
    pass


class MissingComponent(DataError):
    pass


class NegativeTime(DataError):
    pass


class UnknownStatus(DataError):
    pass


class ComponentMismatch(DataError):
    pass


class EmptyArm(DataError):
    pass


class PairCountOverflow(DataError):
    pass


class MethodError(CrtWinError):
    """A procedure is not applicable to this dataset."""


class TooFewClustersPerArm(MethodError):
    pass


class UndefinedGradient(MethodError):
    pass


class UndefinedEstimate(MethodError):
    pass


class UndefinedLeaveOneOut(MethodError):
    pass


class DegenerateDeletion(MethodError):
    pass


class ZeroVariance(MethodError):
    pass


class Infeasible(MethodError):
    """Convex-hull condition fails: the centered pseudo-values share one sign."""


class CapExceeded(MethodError):
    pass


class Unbracketable(MethodError):
    pass
