"""Exception hierarchy shared by all cvmc modules."""


class CVMCError(Exception):
    """Base class for every error raised by cvmc."""


class NonFinite(CVMCError, ValueError):
    """An integrand returned NaN or an infinite value at a quadrature node."""


class RankDeficient(CVMCError, ValueError):
    """A population Gram matrix is (numerically) singular."""


class EstimatorError(CVMCError):
    """Base class for failures of a single OLSMC run."""


class SingularGram(EstimatorError, RankDeficient):
    """The empirical Gram matrix P_n(hh') is rank-deficient."""


class OnesInColumnSpace(EstimatorError):
    """The constant vector lies (numerically) in the column space of H.

    The intercept is then not identifiable.
    """


class InsufficientSamples(EstimatorError):
    """Fewer than m + 2 sample points were supplied."""


class DegenerateSigma(CVMCError):
    """The integrand lies in the control span, so sigma_n = 0."""


class StudyAborted(CVMCError):
    """Too many replications of a study failed."""


class UsageError(CVMCError):
    """Invalid command-line input; ``flag`` names the offending option."""

    def __init__(self, message, flag=None):
        super().__init__(message)
        self.flag = flag
