"""Exception hierarchy. The CLI maps these onto exit codes."""


class RegistrationError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RegistrationError, ValueError):
    """Invalid parameters, manifests or parallel layouts."""


class DimensionError(ConfigurationError):
    """Grid sizes that do not fit an operation."""


class ParameterError(ConfigurationError):
    pass


class InputError(RegistrationError, ValueError):
    """Bad numerical input such as NaN coordinates."""


class NumericalError(RegistrationError, ArithmeticError):
    pass


class NegativeCurvatureError(NumericalError):
    """CG met p^T H p <= 0; the operator is not positive definite."""

    def __init__(self, message, iterate=None, iteration=0, history=None):
        super().__init__(message)
        self.iterate = iterate
        self.iteration = iteration
        self.history = history or []


class VolumeFormatError(RegistrationError, IOError):
    """Malformed volume files."""


class CommunicationError(RegistrationError, RuntimeError):
    """Raised by the message-passing runtime (e.g. a disabled mailbox)."""
