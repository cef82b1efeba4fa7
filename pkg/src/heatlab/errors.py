"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument lies outside the mathematical domain of an operation (e.g. t <= 0 for the kernel)."""


class CapacityError(RuntimeError):
    """Requested sample would exceed the memory guard."""


class ConvergenceError(RuntimeError):
    """Fixed-point iteration stopped before reaching its tolerance."""

    def __init__(self, message, residual, iterations):
        super().__init__(f"{message} (residual={residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations
