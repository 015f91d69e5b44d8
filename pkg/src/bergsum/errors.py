"""Exception hierarchy shared by all bergsum modules."""


class BergsumError(Exception):
    """Base class for all package-specific errors."""


class NonPositiveMetric(BergsumError):
    """The complex Hessian of the potential is not positive-definite at the point."""


class JetUnavailable(BergsumError):
    """The potential or bundle metric cannot supply derivatives of the requested order."""


class StepSizeUnderflow(BergsumError):
    """Finite-difference step control ran out of headroom before reaching tolerance."""


class QuadratureFailure(BergsumError):
    """Node budget exhausted before the integrator reached its target tolerance."""


class SingularGram(BergsumError):
    """Gram matrix condition exceeds the precision budget (tensor power too large)."""


class UnsupportedScenario(BergsumError):
    """Requested basis or geometry is outside the built-in model catalog."""


class DimensionUnsupported(BergsumError):
    """Chart integration is only implemented for complex dimension 1 and 2."""


class InsufficientPrecision(BergsumError):
    """Sample error bounds are too large for the requested fit order."""


class IllConditioned(BergsumError):
    """Fit normal equations exceed the conditioning budget at working precision."""


class ResidualBelowNoise(BergsumError):
    """Post-truncation residual is dominated by sample error; slope is inconclusive."""


class InsufficientCoefficients(BergsumError):
    """Too few resolved coefficients for a convergence-radius probe."""


class ParseError(BergsumError):
    """Configuration text could not be parsed.  Carries a 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ValidationError(BergsumError):
    """Parsed configuration violates a scenario constraint.  Carries a line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class IoFailure(BergsumError):
    """Report files could not be written."""
