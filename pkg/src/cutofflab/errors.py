"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`LabError`,
which is what the study harness catches per grid point.
"""


class LabError(Exception):
    """Base class for all cutofflab errors."""


class DimensionMismatch(LabError, ValueError):
    pass


class NotHermitian(LabError, ValueError):
    pass


class NotHermitianH(NotHermitian):
    """The model Hamiltonian H = H0 + B is required to be Hermitian."""


class ConvergenceFailure(LabError, ArithmeticError):
    pass


class NonFiniteValue(LabError, ArithmeticError):
    pass


class NonDiagonalizable(LabError, ArithmeticError):
    pass


class BadDimension(LabError, ValueError):
    pass


class UnknownModel(LabError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class BadParams(LabError, ValueError):
    pass


class SingularResolvent(LabError, ArithmeticError):
    pass


class ProjectionMismatch(LabError, ValueError):
    pass


class SpectrumBelowOne(LabError, ValueError):
    pass


class WrongModelFamily(LabError, ValueError):
    pass


class QuadratureBudgetExceeded(LabError, ArithmeticError):
    pass


class NotNilpotent(LabError, ArithmeticError):
    pass


class InsufficientPoints(LabError, ValueError):
    pass


class ConfigError(LabError, ValueError):
    pass


class IoError(LabError, OSError):
    """A report could not be written."""
