"""Exception hierarchy shared by the solvers, generators and metrics."""


class PnPfError(Exception):
    """Base class for every error raised by this package."""


class CheiralityViolation(PnPfError):
    """A point lies on or behind the camera plane."""


class DomainError(PnPfError, ValueError):
    pass


class DegenerateGeometry(PnPfError):
    pass


class NotEnoughCorrespondences(PnPfError, ValueError):
    """Fewer correspondences than unknowns allow."""


class NoValidCandidate(PnPfError):
    pass


class DivergedError(PnPfError):
    pass


class NoConsensus(PnPfError):
    pass


class SamplingExhausted(PnPfError):
    pass


class EmptyField(PnPfError):
    pass


class DegenerateGroundTruth(PnPfError, ValueError):
    pass


class EmptyInput(PnPfError, ValueError):
    pass


class UnsortedThresholds(PnPfError, ValueError):
    pass


class ConfigError(PnPfError, ValueError):
    pass


class ExperimentFailure(PnPfError):
    """More than half of an experiment's scenes failed to solve."""
