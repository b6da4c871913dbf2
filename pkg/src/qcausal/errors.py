"""Exception types shared across the package."""


class QCausalError(Exception):
    """Base class for all package errors."""


class CapacityError(QCausalError):
    """A requested dense object would exceed the configured dimension limit."""


class DimensionError(QCausalError, ValueError):
    """Operands have incompatible shapes."""


class StructureError(QCausalError, ValueError):
    """A protocol or circuit is malformed (wrong shapes, non-unitary, T < N, ...)."""


class SettingError(QCausalError, ValueError):
    """A setting value lies outside the party's declared domain."""


class HistoryError(QCausalError, ValueError):
    """A history is inconsistent with the requested operation."""


class InvalidProtocolError(QCausalError):
    """The protocol leaks amplitude out of the all-flags-raised subspace."""

    def __init__(self, message: str, leak: float | None = None):
        super().__init__(message)
        self.leak = leak


class UnreachableHistory(QCausalError):
    """A conditional probability has a vanishing denominator."""


class PreconditionError(QCausalError, ValueError):
    """Arguments violate a documented precondition."""


class UnsupportedSizeError(QCausalError):
    """The instance is too large for exhaustive treatment."""


class IndeterminateError(QCausalError):
    """A numerical routine could not reach a definite answer."""
