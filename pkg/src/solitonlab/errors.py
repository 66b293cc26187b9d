"""Exception hierarchy shared by all modules."""


class SolitonLabError(Exception):
    """Base class. ``exit_code`` is what the CLI returns for it."""

    exit_code = 1


class DomainError(SolitonLabError):
    exit_code = 3


class InvalidDomain(DomainError):
    pass


class GridTooCoarse(DomainError):
    pass


class NotInterior(DomainError):
    pass


class InvalidBoundary(DomainError):
    pass


class InvalidWidth(DomainError):
    pass


class TruncationTooTight(DomainError):
    pass


class InvalidAxis(DomainError):
    pass


class InvalidRadius(DomainError):
    pass


class SectorTooWide(DomainError):
    pass


class NoOverlap(DomainError):
    pass


class NoRegion(DomainError):
    pass


class NotThetaGraph(DomainError):
    pass


class NonConvergence(SolitonLabError):
    def __init__(self, message, stage=None, report=None):
        super().__init__(message)
        self.stage = stage
        self.report = report


class LinearSolverFailure(SolitonLabError):
    pass


class CalibrationFailed(SolitonLabError):
    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class RefuseUnconverged(SolitonLabError):
    pass


class BoundaryContact(SolitonLabError):
    """Extremum of the angle difference sits on the chart boundary."""

    def __init__(self, message, theta0=None, contacts=None):
        super().__init__(message)
        self.theta0 = theta0
        self.contacts = contacts
