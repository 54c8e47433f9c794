class TrainerError(Exception):
    """Base for all errors this package raises on purpose."""


class DataError(TrainerError):
    """Dataset directory missing, malformed, or inconsistent."""


class ConfigError(TrainerError):
    """Bad run configuration or command line."""


class DivergenceError(TrainerError):
    """Training loss became non-finite; carries the loss trace."""

    def __init__(self, message: str, trace: list[float]):
        super().__init__(message)
        self.trace = trace
