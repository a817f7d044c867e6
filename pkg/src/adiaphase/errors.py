"""Exception hierarchy shared by all adiaphase modules."""

__all__ = [
    "AdiaphaseError",
    "SingularMatrix",
    "NearDegenerate",
    "NoConvergence",
    "DefectivePair",
    "TrackingLost",
    "ContourMisplaced",
    "SingularResolvent",
    "ParseError",
    "DissipativityViolation",
    "UnknownModelKind",
    "NotCyclic",
    "StepUnderflow",
    "SectionSingular",
    "CrossCheckFailed",
]


class AdiaphaseError(Exception):
    """Base class; ``s`` carries the reduced time where the failure occurred, if any."""

    def __init__(self, message: str, s: float | None = None):
        super().__init__(message)
        self.s = s


class SingularMatrix(AdiaphaseError):
    pass


class NearDegenerate(AdiaphaseError):
    pass


class NoConvergence(AdiaphaseError):
    pass


class DefectivePair(AdiaphaseError):
    pass


class TrackingLost(AdiaphaseError):
    pass


class ContourMisplaced(AdiaphaseError):
    pass


class SingularResolvent(AdiaphaseError):
    pass


class ParseError(AdiaphaseError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


class DissipativityViolation(AdiaphaseError):
    pass


class UnknownModelKind(ParseError):
    pass


class NotCyclic(AdiaphaseError):
    pass


class StepUnderflow(AdiaphaseError):
    pass


class SectionSingular(AdiaphaseError):
    pass


class CrossCheckFailed(AdiaphaseError):
    pass
