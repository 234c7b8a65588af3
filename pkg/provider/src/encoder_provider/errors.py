"""Error hierarchy for the encoder provider."""


class ProviderError(Exception):
    """Base class for every error this package raises on purpose."""


class ConfigError(ProviderError):
    """Bad or missing run configuration."""


class InputError(ProviderError):
    """Malformed corpus, KB, or edge file content."""


class ModelError(ProviderError):
    """Encoder loading or inference failure."""
