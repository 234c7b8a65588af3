"""Batch encoder producing vectors in the linking engine's file formats."""

__version__ = "0.1.0"

from .encoder import DEFAULT_MODEL, TextEncoder
from .errors import ConfigError, InputError, ModelError, ProviderError
from .pipeline import EncodeJob, EncodeResult, FinetuneJob, FinetuneResult, encode, finetune
from .records import Window

__all__ = [
    "DEFAULT_MODEL",
    "TextEncoder",
    "ConfigError",
    "InputError",
    "ModelError",
    "ProviderError",
    "EncodeJob",
    "EncodeResult",
    "FinetuneJob",
    "FinetuneResult",
    "encode",
    "finetune",
    "Window",
]
