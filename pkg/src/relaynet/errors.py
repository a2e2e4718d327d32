"""Exception types shared across the package."""


class StructureError(ValueError):
    """Operands do not live on a common partition, grid or ground set."""


class ModelAssumptionError(ValueError):
    """Input violates a standing assumption of the network model."""


class ConsistencyError(RuntimeError):
    """A computed quantity left its admissible range beyond round-off."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


class ConfigError(ValueError):
    """Experiment configuration failed validation.

    ``problems`` lists ``(field_path, message)`` pairs, e.g. ``("run.lambda", ...)``.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(f"{field}: {msg}" for field, msg in self.problems))
