"""Exception taxonomy shared by all modules.

The CLI maps these onto exit codes: configuration/usage problems exit 2,
numerical failures exit 3.
"""


class ConfigurationError(ValueError):
    """Invalid dimensions, weights, or run configuration."""


class UsageError(ValueError):
    """A caller violated an operation's precondition (bad mode index, arity, ...)."""


class NumericalError(ArithmeticError):
    """Non-finite propagation, zero-norm states, undefined metrics."""

    def __init__(self, message: str, **context):
        if context:
            detail = ", ".join(f"{k}={v}" for k, v in sorted(context.items()))
            message = f"{message} ({detail})"
        super().__init__(message)
        self.context = context
