"""Exception hierarchy.

Precondition violations subclass ``ValueError``; failures that arise while a
computation runs subclass :class:`NumericalError` (the CLI maps those to exit
code 3).
"""


class CollapseLabError(Exception):
    """Base class for every error raised by this package."""


class NumericalError(CollapseLabError):
    """A computation started but could not produce a trustworthy result."""


class GridTooCoarse(CollapseLabError, ValueError):
    pass


class OutOfDomain(CollapseLabError, ValueError):
    pass


class NotNormalized(CollapseLabError, ValueError):
    pass


class NonPositiveStep(CollapseLabError, ValueError):
    pass


class NegativeRate(CollapseLabError, ValueError):
    pass


class ZeroConstituents(CollapseLabError, ValueError):
    pass


class NegativeEnergy(CollapseLabError, ValueError):
    pass


class AbsorbedAtBoundary(NumericalError):
    """Probability leaked into the outer 5% of the grid (wraparound guard)."""


class EmptyPosterior(NumericalError):
    pass


class StepTooLarge(NumericalError, ValueError):
    pass


class NonDecaying(NumericalError):
    pass


class QuadratureNotConverged(NumericalError):
    pass


class NoExclusion(NumericalError):
    pass


class ConfigInvalid(CollapseLabError):
    """Raised for a bad experiment config; ``path`` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")
