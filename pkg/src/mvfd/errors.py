class ValidationError(ValueError):
    """Raised when inputs violate a shape, range or indicator contract."""


class TrainingDiverged(RuntimeError):
    """Raised when a training loss becomes non-finite."""
