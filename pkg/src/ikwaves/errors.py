"""Exception types shared across the package."""


class GridMismatchError(ValueError):
    """Two fields that must share a grid do not."""


class NonFiniteFieldError(ValueError):
    """A field operation produced NaN or Inf."""


class DepthFloorError(ValueError):
    """The water depth dropped below the configured positivity floor."""


class ConvergenceError(RuntimeError):
    """An iterative solve failed to reach its tolerance."""
