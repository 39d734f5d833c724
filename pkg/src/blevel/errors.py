"""Exception types shared across the solver stack."""


class ConfigError(ValueError):
    """A configuration value violates its contract (positivity, caps, unknown key)."""


class DimensionError(ValueError):
    """Vector/box dimensions do not match."""


class NumericsError(RuntimeError):
    """A non-finite quantity appeared mid-run; carries the iteration index."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message if iteration is None else f"{message} (iteration {iteration})")
        self.iteration = iteration


class ConvergenceError(RuntimeError):
    """A reference solver failed to reach its residual target."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message if residual is None else f"{message} (residual {residual:.3e})")
        self.residual = residual


class InfeasibleError(RuntimeError):
    """No feasible point was found for a lower-level solve."""
