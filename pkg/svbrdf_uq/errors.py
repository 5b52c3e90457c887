class ContractError(ValueError):
    """A precondition of an operation was violated."""


class DimensionMismatchError(ContractError):
    pass


class ImageTooSmallError(ContractError):
    pass


class UndefinedCorrelationError(ContractError):
    """Raised when a correlation is requested for a zero-variance input."""


class InsufficientSamplesError(ContractError):
    pass


class TrainingDivergedError(ContractError):
    pass


class WeightsFormatError(ContractError):
    """Raised for truncated or otherwise corrupt weight payloads."""


class WeightsVersionError(WeightsFormatError):
    pass


class ScheduleError(ContractError):
    pass
