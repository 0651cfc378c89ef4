"""Exception types shared across the package."""


class DDADError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(DDADError, ValueError):
    pass


class NonFiniteError(DDADError, FloatingPointError):
    pass


class SpecError(DDADError, ValueError):
    """Invalid network description; ``layer_index`` points at the culprit."""

    def __init__(self, message, layer_index=None):
        if layer_index is not None:
            message = f"layer {layer_index}: {message}"
        super().__init__(message)
        self.layer_index = layer_index


class ModeError(DDADError, RuntimeError):
    pass


class StaleStatisticsError(DDADError, RuntimeError):
    pass


class CheckpointError(DDADError, IOError):
    pass


class ConfigError(DDADError, ValueError):
    pass


class DivergenceError(DDADError, FloatingPointError):
    """Training produced a non-finite loss."""
