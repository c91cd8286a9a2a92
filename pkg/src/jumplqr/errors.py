"""Exception types shared across the package."""


class MjlsError(Exception):
    """Base class for all jumplqr errors."""


class DimensionMismatch(MjlsError):
    """A matrix or vector has a shape inconsistent with the model."""


class NotStochastic(MjlsError):
    """A probability vector or transition row fails nonnegativity or normalization."""


class NotPositiveDefinite(MjlsError):
    """A weight or covariance matrix fails symmetry or definiteness."""


class BadDiscount(MjlsError):
    """The discount factor is outside (0, 1)."""


class NoConvergence(MjlsError):
    """An iterative solver exhausted its budget without meeting tolerance."""

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class NotStabilizing(MjlsError):
    """The policy does not render the discounted closed loop mean-square stable."""


class SingularMatrix(MjlsError):
    """A matrix that should be invertible is numerically singular."""


class SingularChi(MjlsError):
    """The covariance aggregate used as natural-gradient preconditioner is singular."""


class ZeroSigma(MjlsError):
    """An operation requiring exploration noise was called with sigma = 0."""


class DegenerateInit(MjlsError):
    """The initial-state second moment or mode distribution is degenerate."""


class AllDiverged(MjlsError):
    """Every rollout in a batch diverged; no estimate can be formed."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class GenerationFailed(MjlsError):
    """Random model generation exhausted its retry budget."""
