"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A precondition on solver or experiment parameters is violated."""


class WeightConfigError(ConfigurationError):
    """The weight profile fails one of its admissibility conditions."""


class RegimeError(ConfigurationError):
    """The large-parameter regime condition is violated.

    Carries the offending ratio so callers can report how far out of
    range the configuration is.
    """

    def __init__(self, ratio, threshold):
        self.ratio = ratio
        self.threshold = threshold
        super().__init__(
            f"regime condition violated: ratio {ratio:.6g} > threshold {threshold:.6g}"
        )


class ResourceLimitError(ConfigurationError):
    """A requested problem size exceeds the configured desk-scale cap."""


class SingularSystemError(ArithmeticError):
    """Tridiagonal elimination hit a vanishing pivot."""


class ConvergenceError(RuntimeError):
    """An iterative solve failed to reach its tolerance.

    The residual history is attached for diagnostics.
    """

    def __init__(self, message, residuals=None):
        self.residuals = list(residuals) if residuals is not None else []
        super().__init__(message)
