"""Exception hierarchy shared by the toolkit.

The CLI maps ``ValidationError`` to exit code 1 and every ``NumericalError``
to exit code 2.
"""


class DwnlsError(Exception):
    """Base class for toolkit errors."""


class ValidationError(DwnlsError, ValueError):
    """Bad input: inverted domain, too-coarse grid, unknown config key, ..."""


class NumericalError(DwnlsError, RuntimeError):
    """A numerical stage failed to produce a trustworthy result."""


class SolverError(NumericalError):
    """Eigen/linear solver failed to converge or has a large residual."""


class H1ViolationError(NumericalError):
    """The operator does not have exactly two negative eigenvalues."""

    def __init__(self, message, eigenvalues=()):
        super().__init__(message)
        self.eigenvalues = list(eigenvalues)


class AmplitudeTooLargeError(NumericalError):
    """Fixed-point iteration for the continuous-spectrum correction diverged."""


class ContinuationError(NumericalError):
    """Newton failed along a branch even after step refinement."""


class BifurcationNotFoundError(NumericalError):
    """No sign change of the odd-mode equation along the symmetric branch."""


class SpectralStructureError(NumericalError):
    """The linearized operator does not have the expected eigenvalue count."""


class InstabilityError(NumericalError):
    """Internal-mode frequency squared is not positive."""


class BlowUpError(NumericalError):
    """The PDE field exceeded the configured sup-norm cap."""


class OutOfBasinError(NumericalError):
    """Modulation fit hit the boundary of the precomputed branch."""
