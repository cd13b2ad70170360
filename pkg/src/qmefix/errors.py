"""Exception hierarchy shared by all qmefix modules."""


class QmeError(Exception):
    """Base class for qmefix errors."""


class NonDiagonalizable(QmeError, ArithmeticError):
    """Superoperator is defective or its eigenvector basis is too ill-conditioned."""


class SingularBasis(QmeError, ArithmeticError):
    """A set of vectors does not span Liouville space within the conditioning cap."""


class PoleHit(QmeError, ZeroDivisionError):
    """Frequency argument coincides with a pole of a frequency-domain object."""


class TransformZero(QmeError, ZeroDivisionError):
    """A Laplace transform appearing in a denominator vanishes."""


class SingularTime(QmeError, ValueError):
    """Time argument lies within the guard band of a generator singularity."""


class SingularNode(QmeError, ValueError):
    """An unmasked grid node hits a generator singularity."""


class WrongRegime(QmeError, ValueError):
    """Operation is only defined in the other (over/underdamped) regime."""


class GridMismatch(QmeError, ValueError):
    """Time argument or trajectory is incompatible with the expected grid."""


class DivergentQuadrature(QmeError, ArithmeticError):
    """Integrand of a Laplace-type integral does not decay."""


class ConvergenceRegion(QmeError, ValueError):
    """Argument lies outside the region where the defining integral converges."""


class DomainError(QmeError, ValueError):
    """Special-function argument outside its supported domain."""


class MaxIterExceeded(QmeError, RuntimeError):
    """Iteration did not converge; carries the last iterate and the report."""

    def __init__(self, message, result=None, report=None):
        super().__init__(message)
        self.result = result
        self.report = report


class NoConvergence(QmeError, RuntimeError):
    """Inner self-consistency loop failed to converge."""


class BranchSwitch(QmeError, ArithmeticError):
    """Eigenvector continuation lost track of the eigenvalue branch."""


class HigherOrderPole(QmeError, ArithmeticError):
    """Residue formula requires a first-order pole."""


class SingularResolvent(QmeError, ZeroDivisionError):
    """E - K(E) is not invertible."""


class SamplingViolation(QmeError, AssertionError):
    """The stationary generator does not sample the kernel at one of its eigenvalues."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DerivativeOrderTooHigh(QmeError, ValueError):
    """Requested numerical derivative order exceeds the configured cap."""


class ConventionMismatch(QmeError, AssertionError):
    """Closed-form coefficient formula disagrees with the recursion."""
