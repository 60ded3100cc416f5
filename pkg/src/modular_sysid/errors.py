"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    pass


class DomainError(ValueError):
    pass


class ShapeError(ValueError):
    pass


class StateError(RuntimeError):
    pass


class InvalidConfigError(ValueError):
    pass


class SingularityError(ArithmeticError):
    pass


class DegenerateProbeError(ValueError):
    """Two probes of one module produced indistinguishable responses."""

    def __init__(self, module: int, message: str | None = None):
        self.module = module
        super().__init__(message or f"probes of module {module} give coinciding responses")


class InvalidPairError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    """Iterative solver gave up; ``residual`` holds the last residual norm."""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (residual {residual:.3e})")
