"""Exception types raised across the package."""


class ParameterDomainError(ValueError):
    """A kernel/model parameter or input lies outside its valid domain."""


class UnsupportedOperationError(NotImplementedError):
    """The requested operation is not defined for this kernel family."""


class IllConditionedError(ArithmeticError):
    """A covariance matrix could not be factorized even after jitter escalation."""


class NotFoundError(KeyError):
    """A configuration or epoch is missing from a learning-curve table."""


class ConfigError(ValueError):
    """An invalid run configuration."""


class BackendError(RuntimeError):
    """A learner backend failed while training."""
