"""Exception hierarchy shared by every module of the package."""


class BTRError(Exception):
    """Base class for all errors raised by this package."""


class NonConvergence(BTRError):
    """An iterative procedure (Newton, root polish, node doubling) gave up."""


class PoleHit(BTRError):
    """A function was evaluated at (or numerically on top of) one of its poles."""


class DiagonalHit(PoleHit):
    """A two-point function was evaluated on its diagonal singularity."""


class DegenerateGeometry(BTRError):
    """A contour radius collapsed below the admissible minimum."""


class RamificationPoint(BTRError):
    """An x-derivative was requested where x' vanishes."""


class AmbiguousConjugate(BTRError):
    """The local Galois conjugate could not be singled out from the fiber."""


class BadConfig(BTRError):
    """Curve or run configuration violates its invariants."""


class StabilityViolation(BTRError):
    """A correlator outside the stable range 2g + n >= 2 was requested."""
