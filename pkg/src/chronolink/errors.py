"""Exception hierarchy shared across the package.

Every error raised on bad user input derives from ChronolinkError so the
CLI can catch one base class and emit a machine-readable diagnostic.
"""

from __future__ import annotations


class ChronolinkError(Exception):
    """Base class for all errors raised by this package."""


class CorpusError(ChronolinkError):
    """A corpus, knowledge-base, or QA file violates its record schema."""


class TokenBudgetError(ChronolinkError):
    """A token budget is too small to hold the required structural tokens."""


class EmbeddingError(ChronolinkError):
    """An embedding file or table violates the vector-store contract."""


class MissingEmbeddingError(ChronolinkError, KeyError):
    """An id was looked up in an embedding table that does not contain it."""

    def __str__(self) -> str:  # KeyError quotes its arg; keep the plain message
        return Exception.__str__(self)


class GraphError(ChronolinkError):
    """An affinity graph could not be built or partitioned."""


class TrainingError(ChronolinkError):
    """A training segment cannot run with the inputs provided."""


class MetricsError(ChronolinkError):
    """A metric was asked to aggregate an empty or malformed group."""


class RagError(ChronolinkError):
    """Retrieval, prompting, or generation plumbing was misconfigured."""


class ConfigError(ChronolinkError):
    """A run configuration file or flag set is invalid."""
