"""Exception types shared across the package.

Every numerical routine raises one of these instead of returning silently
wrong values; the names encode what went wrong, not where.
"""


class PkpzError(Exception):
    """Base class for all package errors."""


class DomainViolation(PkpzError):
    """An argument lies outside the domain where the formula is valid."""


class RootsNearCritical(PkpzError):
    """A Bethe root sits too close to the vertical line Re(w) = -rho;
    the left/right partition is unreliable."""


class ConvergenceFailure(PkpzError):
    """Newton polishing or an iterative solve stalled before reaching
    the required residual."""


class IdentityViolation(PkpzError):
    """An exact algebraic identity between computed quantities failed
    beyond tolerance (signals an upstream solver failure)."""


class SingularDenominator(PkpzError):
    """A determinant in a denominator vanished (coincident nodes)."""


class DegenerateEnergy(PkpzError):
    """The energy function is too close to zero to divide by."""


class WindowOverflow(PkpzError):
    """A random-walk table would exceed its configured window."""


class TailBoundFailure(PkpzError):
    """A geometric tail bound needed for truncation does not hold
    (per-period factor has modulus >= 1)."""


class QuadratureStall(PkpzError):
    """Doubling the quadrature nodes stopped improving the result
    before the tolerance was met."""


class AdaptivityFailure(PkpzError):
    """Doubling a truncation size stopped improving the result
    before the tolerance was met."""


class SeriesNotConverged(PkpzError):
    """Terms of a series expansion are not decaying at the truncation
    order."""


class CalibrationUnresolved(PkpzError):
    """Two candidate integration measures both disagree with the
    Monte Carlo reference beyond the allowed number of standard errors."""


class ParityViolation(PkpzError):
    """Height/particle conversion was requested at a site with the
    wrong parity."""


class PoleAtRho(PkpzError):
    """An integrand factor was evaluated too close to its pole at
    w = -rho."""


class AnchorOutsideSupport(PkpzError):
    """The anchor point for the kernel conjugation lies outside the
    support of the initial-profile function."""


class OrderingViolation(PkpzError):
    """Time parameters are not weakly increasing, or equal-time points
    are not ordered by their height arguments."""
