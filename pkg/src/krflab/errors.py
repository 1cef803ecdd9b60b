"""Exception hierarchy shared by every krflab module."""


class KrfError(Exception):
    """Base class for all krflab errors."""


# pointwise algebra
class NonPositiveDefinite(KrfError, ValueError):
    pass


class DimensionMismatch(KrfError, ValueError):
    pass


class ZeroVector(KrfError, ValueError):
    pass


class SymmetryViolation(KrfError, ValueError):
    """A tensor or matrix broke a required symmetry beyond tolerance."""


# Royden harness
class NegativeKappa(KrfError, ValueError):
    pass


class NonPositiveTrace(KrfError, ValueError):
    pass


class HypothesisViolated(KrfError):
    """Sampled HSC sup exceeds -kappa: the test data is bad, not the inequality."""


class GenerationFailed(KrfError):
    pass


# models and flow
class NonPositiveInitialMetric(KrfError, ValueError):
    pass


class PositivityLost(KrfError):
    """The evolving metric degenerated; ``t`` is the time at which it was detected."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class NoClosedForm(KrfError):
    pass


class MonitorViolation(KrfError):
    """A monitored a priori estimate failed beyond its tolerance."""

    def __init__(self, message, t=None, margin=None):
        super().__init__(message)
        self.t = t
        self.margin = margin


# cohomology
class LatticeMismatch(KrfError, ValueError):
    pass


class InitialClassNotKahler(KrfError, ValueError):
    pass


class BoundViolated(KrfError):
    """A cohomological intersection number undercut the flow-derived lower bound."""


class ConfigError(KrfError, ValueError):
    pass
