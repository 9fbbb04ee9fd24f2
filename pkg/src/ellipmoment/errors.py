"""Exception hierarchy shared by every module of the package."""


class EllipMomentError(Exception):
    """Base class for all errors raised by ellipmoment."""


class DomainError(EllipMomentError, ValueError):
    """Argument outside the domain of a special function."""


class PoleError(DomainError):
    """Argument sits on a pole (e.g. zeta at s = 1)."""


class NonConvergenceError(EllipMomentError, ArithmeticError):
    """A series or adaptive quadrature did not reach its tolerance."""


class ValidityError(EllipMomentError, ValueError):
    """A family parameter gate failed (e.g. Student-t degrees of freedom)."""


class NotPositiveDefiniteError(EllipMomentError, ValueError):
    """Cholesky pivot fell below tolerance."""

    def __init__(self, index, pivot):
        self.index = index
        self.pivot = pivot
        super().__init__(f"matrix is not positive definite: pivot {index} = {pivot!r}")


class IndefiniteMatrixError(EllipMomentError, ValueError):
    """Symmetric matrix has an eigenvalue below the negative tolerance."""


class SingularFactorError(EllipMomentError, ValueError):
    """Operation needs a full-rank scale factor but got a deficient one."""


class MomentNonexistenceError(EllipMomentError, ValueError):
    """Requested moment is infinite for the family (heavy tails)."""


class FamilyMismatchError(EllipMomentError, ValueError):
    """Operation restricted to a family was called with another one."""


class DimensionError(EllipMomentError, ValueError):
    """Dimension unsupported by the requested method."""


class NonFiniteValueError(EllipMomentError, ArithmeticError):
    """An integrand produced NaN or infinity."""


class DegreeLimitError(EllipMomentError, ValueError):
    """Combinatorial guard on the total degree was exceeded."""
