"""Exception and warning types raised across the package."""


class SofariError(Exception):
    """Base class for all package errors."""


class ConstraintViolation(SofariError):
    """Right singular vectors are not orthonormal within tolerance."""


class AntipodalPoint(SofariError):
    """Logarithm map requested between (numerically) antipodal points."""


class SupportOverflow(SofariError):
    """Requested supports do not fit the configured dimensions."""


class RankDeficiency(SofariError):
    pass


class RankTooLarge(SofariError):
    pass


class DegenerateColumn(SofariError):
    """Nodewise residual variance vanished (collinear design)."""


class DegenerateLayer(SofariError):
    """z_kk = u_k' Sigma u_k is numerically zero."""


class SingularInnerMatrix(SofariError):
    """The small inner matrix of the W construction is not invertible."""

    def __init__(self, msg, cond=float("inf")):
        super().__init__(msg)
        self.cond = cond


class NonConvergenceWarning(UserWarning):
    pass


class NonPositiveVarianceWarning(UserWarning):
    pass
