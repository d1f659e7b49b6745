"""Exception types shared across the package."""


class FlowError(Exception):
    """Base class for all errors raised by this package."""


class RegularityError(FlowError):
    """A curve's parametrisation speed |gamma_x| vanished or fell below a floor."""


class AssemblyError(FlowError):
    """Linear step system could not be assembled from the given coefficients."""


class SingularSystemError(FlowError):
    """Direct factorisation detected a (numerically) rank-deficient step system."""


class InvalidLambdaError(FlowError):
    """A spectral sample with non-positive real part was passed to the boundary check."""


class PicardDivergence(FlowError):
    """Fixed-point correction failed to contract within the iteration budget."""

    def __init__(self, message, iterations=0, displacements=()):
        super().__init__(message)
        self.iterations = iterations
        self.displacements = tuple(displacements)


class InadmissibleInitialData(FlowError):
    """Initial network violates the junction conditions beyond tolerance."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class InfeasibleSteiner(FlowError):
    """Endpoint triangle has an angle of 120 degrees or more; no interior junction exists."""


class ParseError(FlowError):
    """Input file is not syntactically valid."""


class ValidationError(FlowError):
    """Input file parsed but violates the documented schema or state invariants."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class IoError(FlowError):
    """Reading or writing an artifact file failed."""
