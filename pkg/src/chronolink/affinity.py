"""Inner-product affinities and adaptive cluster representations.

An entity is scored against a mention through its cluster
representation: a convex blend of the static entity embedding and the
mean embedding of the mentions resolved to that entity in the previous
time segment.  With blend weight 1.0 the representation collapses to the
static entity vector; with 0.0 it is the member mean alone (falling back
to the entity vector when there are no members).
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ChronolinkError, EmbeddingError

DEFAULT_BLEND = 0.8
DEFAULT_MEMBER_CAP = 30

VectorFn = Callable[[str], np.ndarray]


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise EmbeddingError(f"dimension mismatch: {a.shape} vs {b.shape}")


def entity_mention_affinity(cluster_rep: np.ndarray, mention_vec: np.ndarray) -> float:
    """Inner product of a cluster representation with a mention vector."""
    _check_pair(cluster_rep, mention_vec)
    return float(np.dot(cluster_rep, mention_vec))


def mention_mention_affinity(a: np.ndarray, b: np.ndarray) -> float:
    """Inner product between two mention vectors."""
    _check_pair(a, b)
    return float(np.dot(a, b))


def affinity_to_weight(affinity: float) -> float:
    """Graph edges carry dissimilarity, so weight is negated affinity."""
    return -affinity


def cluster_representation(
    entity_vec: np.ndarray,
    member_vecs: Sequence[np.ndarray],
    blend: float,
) -> np.ndarray:
    """Blend a static entity vector with the mean of member vectors.

    With no members the entity vector is returned unchanged regardless
    of the blend weight.
    """
    if not 0.0 <= blend <= 1.0:
        raise ChronolinkError(f"blend weight must lie in [0, 1], got {blend}")
    if not member_vecs:
        return np.array(entity_vec, dtype=np.float64, copy=True)
    stack = np.stack([np.asarray(v, dtype=np.float64) for v in member_vecs])
    if stack.shape[1:] != np.asarray(entity_vec).shape:
        raise EmbeddingError("member vectors do not match the entity vector dimension")
    return blend * np.asarray(entity_vec, dtype=np.float64) + (1.0 - blend) * stack.mean(axis=0)


def sample_cluster_mentions(members: Iterable[str], cap: int, seed: int) -> tuple[str, ...]:
    """Pick at most ``cap`` member ids uniformly without replacement.

    Deterministic for a given seed; the result is returned sorted since
    membership is a set.
    """
    if cap < 1:
        raise ChronolinkError(f"cap must be at least 1, got {cap}")
    pool = sorted(members)
    if len(pool) <= cap:
        return tuple(pool)
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(pool), size=cap, replace=False)
    return tuple(sorted(pool[i] for i in picked))


def _sample_with_rng(pool: Sequence[str], cap: int, rng: np.random.Generator) -> tuple[str, ...]:
    if len(pool) <= cap:
        return tuple(pool)
    picked = rng.choice(len(pool), size=cap, replace=False)
    return tuple(sorted(pool[i] for i in picked))


class ClusterState:
    """Per-entity memberships carried from the previous time segment.

    Memberships are replaced wholesale at each segment boundary: gold
    links after a training segment, predicted links after a test
    segment.  Representations are computed on demand from whatever
    parameter tables the caller supplies, so updated embeddings are
    picked up without invalidation logic.
    """

    def __init__(self, blend: float = DEFAULT_BLEND) -> None:
        if not 0.0 <= blend <= 1.0:
            raise ChronolinkError(f"blend weight must lie in [0, 1], got {blend}")
        self.blend = blend
        self.members: dict[str, tuple[str, ...]] = {}
        self.cached_reps: dict[str, np.ndarray] = {}

    def copy(self) -> "ClusterState":
        dup = ClusterState(self.blend)
        dup.members = dict(self.members)
        dup.cached_reps = dict(self.cached_reps)
        return dup

    def set_members(self, links: Mapping[str, str]) -> None:
        """Replace memberships from a mention -> entity link table."""
        grouped: dict[str, list[str]] = {}
        for mention_id, entity_id in links.items():
            grouped.setdefault(entity_id, []).append(mention_id)
        self.members = {eid: tuple(sorted(ms)) for eid, ms in sorted(grouped.items())}
        self.cached_reps = {}

    def members_of(self, entity_id: str) -> tuple[str, ...]:
        return self.members.get(entity_id, ())

    def sampled_members(
        self,
        cap: int = DEFAULT_MEMBER_CAP,
        rng: np.random.Generator | None = None,
    ) -> dict[str, tuple[str, ...]]:
        """Cap each membership by uniform sampling; deterministic given rng.

        Entities are visited in sorted order so one generator yields the
        same draw on every run.
        """
        if cap < 1:
            raise ChronolinkError(f"cap must be at least 1, got {cap}")
        if rng is None:
            rng = np.random.default_rng(0)
        return {eid: _sample_with_rng(ms, cap, rng) for eid, ms in sorted(self.members.items())}

    def representation(
        self,
        entity_id: str,
        entity_vec_fn: VectorFn,
        mention_vec_fn: VectorFn,
        members: Sequence[str] | None = None,
    ) -> np.ndarray:
        """Blend one entity's representation from the given tables."""
        use = self.members.get(entity_id, ()) if members is None else members
        return cluster_representation(
            entity_vec_fn(entity_id),
            [mention_vec_fn(m) for m in use],
            self.blend,
        )

    def cache_representations(
        self,
        entity_ids: Iterable[str],
        entity_vec_fn: VectorFn,
        mention_vec_fn: VectorFn,
        members: Mapping[str, Sequence[str]] | None = None,
    ) -> dict[str, np.ndarray]:
        """Materialize representations for a set of entities.

        The result is also kept on the state (``cached_reps``) so the
        linking pass for one segment reuses a single consistent table.
        """
        reps: dict[str, np.ndarray] = {}
        for eid in sorted(set(entity_ids)):
            use = members.get(eid, ()) if members is not None else None
            reps[eid] = self.representation(eid, entity_vec_fn, mention_vec_fn, members=use)
        self.cached_reps = reps
        return reps
