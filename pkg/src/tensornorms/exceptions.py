"""Exception types raised across the package."""


class TensorNormsError(Exception):
    pass


class SizingError(TensorNormsError, ValueError):
    """Operand dimensions do not conform."""


class UnsupportedOrderError(TensorNormsError, ValueError):
    """Tensor order outside what an operation supports."""


class NotPositiveDefiniteError(TensorNormsError, ValueError):
    pass


class DomainError(TensorNormsError, ValueError):
    """Evaluation point outside the domain of a model (singular radius, pole)."""


class PropagationError(TensorNormsError, RuntimeError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class SingularTransferError(TensorNormsError, ValueError):
    """The position-from-velocity block of the STM is (numerically) singular."""

    def __init__(self, message, condition):
        super().__init__(message)
        self.condition = condition


class DegenerateGeometryError(TensorNormsError, ValueError):
    pass


class MissingOrderError(TensorNormsError, ValueError):
    """An STT of the required order was not propagated."""
