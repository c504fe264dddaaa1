"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid scenario, preset, or operation parameters."""


class SolverError(RuntimeError):
    """A linear solve failed or violated its residual contract."""
