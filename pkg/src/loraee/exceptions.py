class LoraEEException(Exception):
    """Base exception for all errors raised by the loraee package."""

    pass


class SchemaLogicError(LoraEEException, ValueError):
    """Raised when data violates the logical rules of a schema, beyond basic type validation."""

    pass


class NonFiniteInputError(LoraEEException, ValueError):
    """Raised when a physical quantity is NaN or infinite."""

    pass


class PlacementInfeasibleError(LoraEEException):
    """Raised when gateway spacing cannot be satisfied within the retry budget."""

    pass


class InfeasibleQuotaError(LoraEEException):
    """Raised when the channel quota cannot host every end device (quota * channels < devices)."""

    pass


class AssignmentConstraintError(LoraEEException):
    """Raised when an assignment violates the power, single-access or quota constraints."""

    pass


class OutOfCoverageError(LoraEEException):
    """Raised when an end device lies beyond the coverage radius of every gateway."""

    pass


class NumericalDivergenceError(LoraEEException):
    """Raised when training produces a non-finite loss."""

    pass


class LoraEEIOException(LoraEEException):
    """Raised for file system or I/O related errors during processing."""

    pass


class LoraEESerializationError(LoraEEException):
    """Raised when data cannot be serialized to the desired format (e.g., JSON)."""

    pass
