"""Exception types shared across the package."""


class ValidationError(ValueError):
    """An input violates a documented precondition."""


class CapacityError(ValidationError):
    """A size limit (qubit count, register length) was exceeded."""


class ConfigurationError(ValidationError):
    """A hyperparameter configuration is outside its declared domain."""


class DatasetError(ValueError):
    """A dataset file or manifest cannot be parsed or fails eligibility."""


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss or parameter value."""
