"""Exception types shared across the toolkit."""


class HGPoisonError(Exception):
    """Base class for all toolkit errors."""


class DatasetError(HGPoisonError):
    """A dataset directory or in-memory graph violates the format contract."""


class ConfigError(HGPoisonError):
    """An attack configuration or CLI invocation is invalid."""
