"""Exception types shared across the package.

Configuration problems derive from :class:`ValueError`; numerical failures
derive from :class:`RuntimeError`. The CLI maps the two families onto
distinct exit codes.
"""


class ConfigError(ValueError):
    """Malformed input, bad parameters, or an invalid request."""


class ModelValidationError(ConfigError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class NumericalError(RuntimeError):
    """A numerical routine failed to produce a usable result."""


class NewtonConvergenceError(NumericalError):
    def __init__(self, residual, iterations, step_index=None):
        self.residual = residual
        self.iterations = iterations
        self.step_index = step_index
        where = "" if step_index is None else f" at step {step_index}"
        super().__init__(
            f"stage Newton iteration did not converge{where} after "
            f"{iterations} iterations (residual {residual:.3e})"
        )


class SingularMatrixError(NumericalError):
    pass


class InfeasibleTrajectoryError(NumericalError):
    """The simulated state became non-finite."""
