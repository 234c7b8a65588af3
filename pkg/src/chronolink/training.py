"""Continual training over time segments and the end-to-end loop.

Each training batch builds an affinity graph from gold links, keeps the
edges that survive constraint pruning as positives, mines the hardest
non-gold entities and out-of-cluster mentions as negatives, and applies
a logistic loss over edge affinities.  Gradients are computed
analytically and flow through blended cluster representations into both
the entity table and the member mention vectors.

The continual loop walks segments in timeline order: training segments
fit the tables and hand gold links to the cluster state; test segments
link mentions with the frozen procedure and hand their own predictions
forward instead.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import expit

from .affinity import DEFAULT_BLEND, DEFAULT_MEMBER_CAP, ClusterState, cluster_representation
from .corpus import CorpusSnapshot, EntityCatalog
from .embeddings import KINDS, VectorRecord
from .errors import MissingEmbeddingError, TrainingError
from .graph import (
    DEFAULT_ENTITY_FAN_IN,
    DEFAULT_MENTION_FAN_IN,
    AffinityGraph,
    AffinityNode,
    build_batch_graph,
    build_inference_graph,
    entity_node,
    mention_node,
    prune_and_cluster,
    rank_candidates,
    resolve_segment,
)
from .metrics import PredictionRecord, jaccard_char

# Probabilities are clamped before the log; the clamp only binds once
# |affinity| exceeds ~27.6, far outside the range of trained tables.
PROB_FLOOR = 1e-12

LOSS_ON_AFFINITY = "affinity"
LOSS_ON_WEIGHT = "weight"

_OPTIMIZERS = ("sgd",)


@dataclass(frozen=True)
class TrainerConfig:
    """Knobs for segment training; defaults follow the reference setup."""

    threshold: float = math.inf
    num_negatives: int = 64
    blend: float = DEFAULT_BLEND
    batch_size: int = 32
    learning_rate: float = 3e-5
    epochs: int = 5
    mention_cap: int = DEFAULT_MEMBER_CAP
    seed: int = 0
    loss_on: str = LOSS_ON_AFFINITY
    optimizer: str = "sgd"

    def __post_init__(self) -> None:
        if math.isnan(self.threshold):
            raise TrainingError("threshold must not be NaN")
        if self.num_negatives < 2:
            raise TrainingError(f"num_negatives must be at least 2, got {self.num_negatives}")
        if not 0.0 <= self.blend <= 1.0:
            raise TrainingError(f"blend must lie in [0, 1], got {self.blend}")
        if self.batch_size < 1:
            raise TrainingError(f"batch_size must be at least 1, got {self.batch_size}")
        # learning_rate 0 is allowed: it turns training into a dry run.
        if self.learning_rate < 0 or not math.isfinite(self.learning_rate):
            raise TrainingError(f"learning_rate must be finite and non-negative, got {self.learning_rate}")
        if self.epochs < 0:
            raise TrainingError(f"epochs must be non-negative, got {self.epochs}")
        if self.mention_cap < 1:
            raise TrainingError(f"mention_cap must be at least 1, got {self.mention_cap}")
        if self.loss_on not in (LOSS_ON_AFFINITY, LOSS_ON_WEIGHT):
            raise TrainingError(f"loss_on must be '{LOSS_ON_AFFINITY}' or '{LOSS_ON_WEIGHT}'")
        if self.optimizer not in _OPTIMIZERS:
            raise TrainingError(f"optimizer must be one of {_OPTIMIZERS}, got {self.optimizer!r}")


class ParameterSet:
    """Mutable entity and mention vector tables of one shared dimension."""

    def __init__(self, dim: int | None = None) -> None:
        self.dim = dim
        self.entities: dict[str, np.ndarray] = {}
        self.mentions: dict[str, np.ndarray] = {}

    def _table(self, kind: str) -> dict[str, np.ndarray]:
        if kind == "entity":
            return self.entities
        if kind == "mention":
            return self.mentions
        raise TrainingError(f"kind must be one of {KINDS}, got {kind!r}")

    def set(self, kind: str, id: str, vector) -> None:
        vec = np.asarray(vector, dtype=np.float64)
        if vec.ndim != 1 or vec.size == 0:
            raise TrainingError(f"{kind} {id!r}: vector must be a non-empty 1-D array")
        if not np.all(np.isfinite(vec)):
            raise TrainingError(f"{kind} {id!r}: vector has non-finite components")
        if self.dim is None:
            self.dim = int(vec.size)
        elif vec.size != self.dim:
            raise TrainingError(f"{kind} {id!r}: dimension {vec.size} does not match table dimension {self.dim}")
        self._table(kind)[id] = vec.copy()

    def vector(self, kind: str, id: str) -> np.ndarray:
        table = self._table(kind)
        if id not in table:
            raise MissingEmbeddingError(f"no {kind} vector stored for id {id!r}")
        return table[id]

    def entity_vector(self, id: str) -> np.ndarray:
        return self.vector("entity", id)

    def mention_vector(self, id: str) -> np.ndarray:
        return self.vector("mention", id)

    def copy(self) -> "ParameterSet":
        dup = ParameterSet(self.dim)
        dup.entities = {k: v.copy() for k, v in self.entities.items()}
        dup.mentions = {k: v.copy() for k, v in self.mentions.items()}
        return dup

    def apply_gradient(self, gradient: Mapping[tuple[str, str], np.ndarray], learning_rate: float) -> None:
        """One plain gradient-descent step over the addressed vectors."""
        for (kind, id), g in gradient.items():
            table = self._table(kind)
            if id not in table:
                raise MissingEmbeddingError(f"gradient addresses unknown {kind} id {id!r}")
            updated = table[id] - learning_rate * np.asarray(g, dtype=np.float64)
            if not np.all(np.isfinite(updated)):
                raise TrainingError(f"{kind} {id!r}: update produced non-finite components")
            table[id] = updated

    def checksum(self) -> str:
        """Content hash over both tables, for determinism checks."""
        digest = hashlib.sha256()
        for kind, table in (("entity", self.entities), ("mention", self.mentions)):
            for id in sorted(table):
                digest.update(kind.encode())
                digest.update(id.encode())
                digest.update(np.ascontiguousarray(table[id]).tobytes())
        return digest.hexdigest()

    @classmethod
    def from_records(cls, records: Iterable[VectorRecord], *, normalize: bool = False) -> "ParameterSet":
        params = cls()
        for rec in records:
            vec = rec.vector
            if normalize:
                norm = float(np.linalg.norm(vec))
                if norm == 0.0:
                    raise TrainingError(f"record {rec.id!r}: cannot normalize a zero vector")
                vec = vec / norm
            params.set(rec.kind, rec.id, vec)
        return params

    def to_records(self, segment: str = "") -> list[VectorRecord]:
        out = [VectorRecord(id=i, kind="entity", segment=segment, vector=v) for i, v in sorted(self.entities.items())]
        out += [VectorRecord(id=i, kind="mention", segment=segment, vector=v) for i, v in sorted(self.mentions.items())]
        return out


@dataclass(frozen=True)
class LabeledEdge:
    """A graph edge tagged 1 (should hold) or 0 (should not)."""

    source: AffinityNode
    target: AffinityNode
    label: int

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise TrainingError(f"edge label must be 0 or 1, got {self.label}")
        if self.target.kind != "mention":
            raise TrainingError("labeled edges must target mentions")


@dataclass(frozen=True)
class BlendSpec:
    """How entity sources decompose for loss and gradient purposes.

    ``members`` holds the membership sample in effect for this
    iteration; entities absent from it contribute their raw vector.
    """

    blend: float
    members: Mapping[str, tuple[str, ...]]


def _source_terms(node: AffinityNode, blend: BlendSpec | None) -> list[tuple[str, str, float]]:
    """Decompose an edge source into (kind, id, coefficient) terms."""
    if node.kind == "mention":
        return [("mention", node.ref_id, 1.0)]
    if blend is None:
        return [("entity", node.ref_id, 1.0)]
    members = blend.members.get(node.ref_id, ())
    if not members:
        return [("entity", node.ref_id, 1.0)]
    share = (1.0 - blend.blend) / len(members)
    return [("entity", node.ref_id, blend.blend)] + [("mention", m, share) for m in members]


def _edge_affinity(edge: LabeledEdge, params: ParameterSet, blend: BlendSpec | None) -> tuple[float, list[tuple[str, str, float]], np.ndarray, np.ndarray]:
    terms = _source_terms(edge.source, blend)
    rep = np.zeros(params.dim, dtype=np.float64)
    for kind, id, coeff in terms:
        rep += coeff * params.vector(kind, id)
    target_vec = params.mention_vector(edge.target.ref_id)
    return float(np.dot(rep, target_vec)), terms, rep, target_vec


def _sign(loss_on: str) -> float:
    if loss_on == LOSS_ON_AFFINITY:
        return 1.0
    if loss_on == LOSS_ON_WEIGHT:
        return -1.0
    raise TrainingError(f"loss_on must be '{LOSS_ON_AFFINITY}' or '{LOSS_ON_WEIGHT}'")


def batch_loss(
    edges: Sequence[LabeledEdge],
    params: ParameterSet,
    blend: BlendSpec | None = None,
    loss_on: str = LOSS_ON_AFFINITY,
) -> float:
    """Logistic loss over labeled edges, averaged per target mention.

    Positive edges are pushed toward high affinity and negative ones
    toward low; the ``weight`` mode scores the logistic on the negated
    affinity instead, for auditing the alternative reading.  Returns 0.0
    for an empty edge list.
    """
    if not edges:
        return 0.0
    sign = _sign(loss_on)
    totals: dict[str, float] = {}
    for edge in edges:
        a, _terms, _rep, _tv = _edge_affinity(edge, params, blend)
        p = float(np.clip(expit(sign * a), PROB_FLOOR, 1.0 - PROB_FLOOR))
        term = -(math.log(p) if edge.label == 1 else math.log(1.0 - p))
        totals[edge.target.ref_id] = totals.get(edge.target.ref_id, 0.0) + term
    return sum(totals.values()) / len(totals)


def loss_gradient(
    edges: Sequence[LabeledEdge],
    params: ParameterSet,
    blend: BlendSpec | None = None,
    loss_on: str = LOSS_ON_AFFINITY,
) -> dict[tuple[str, str], np.ndarray]:
    """Analytic gradient of batch_loss with respect to every vector.

    Entity sources distribute their gradient across the blend: the
    entity vector receives the blend coefficient and each sampled member
    mention its equal share of the remainder.  The clamp inside the loss
    is ignored here since it only binds at unreachable affinities.
    """
    if not edges:
        return {}
    sign = _sign(loss_on)
    n_targets = len({e.target.ref_id for e in edges})
    factor = 1.0 / n_targets
    grads: dict[tuple[str, str], np.ndarray] = {}

    def bump(kind: str, id: str, delta: np.ndarray) -> None:
        key = (kind, id)
        if key not in grads:
            grads[key] = np.zeros(params.dim, dtype=np.float64)
        grads[key] += delta

    for edge in edges:
        a, terms, rep, target_vec = _edge_affinity(edge, params, blend)
        g = sign * (float(expit(sign * a)) - float(edge.label))
        bump("mention", edge.target.ref_id, factor * g * rep)
        for kind, id, coeff in terms:
            bump(kind, id, factor * g * coeff * target_vec)
    return grads


def positive_edges(
    graph: AffinityGraph,
    threshold: float | None = None,
    restrict_targets: Iterable[str] | None = None,
) -> list[LabeledEdge]:
    """Edges surviving constraint pruning, labeled positive.

    ``restrict_targets`` keeps only edges into the given mentions, which
    training uses to tie positives to the current batch.
    """
    partition = prune_and_cluster(graph, threshold)
    keep = set(restrict_targets) if restrict_targets is not None else None
    out = []
    for edge in partition.retained_edges:
        if keep is None or edge.target.ref_id in keep:
            out.append(LabeledEdge(source=edge.source, target=edge.target, label=1))
    return out


def _top_k_ids(ids: Sequence[str], scores: np.ndarray, k: int) -> list[str]:
    order = np.argsort(-scores, kind="stable")  # ids pre-sorted, stable keeps id order on ties
    return [ids[i] for i in order[:k]]


def negative_edges(
    mention_id: str,
    gold_entity: str,
    coref_set: Iterable[str],
    entity_reps: Mapping[str, np.ndarray],
    mention_vecs: Mapping[str, np.ndarray],
    k: int,
    target_vec: np.ndarray,
) -> list[LabeledEdge]:
    """Mine the hardest negatives for one mention.

    Half of ``k`` comes from the most affine non-gold entities and half
    from the most affine mentions outside the gold coreference set; a
    short candidate pool yields fewer edges rather than an error.
    """
    if k < 2:
        raise TrainingError(f"negative budget k must be at least 2, got {k}")
    half = k // 2
    target = mention_node(mention_id)
    edges: list[LabeledEdge] = []

    eids = sorted(e for e in entity_reps if e != gold_entity)
    if eids and half > 0:
        mat = np.stack([np.asarray(entity_reps[e], dtype=np.float64) for e in eids])
        scores = mat @ target_vec
        for eid in _top_k_ids(eids, scores, min(half, len(eids))):
            edges.append(LabeledEdge(entity_node(eid), target, 0))

    blocked = set(coref_set) | {mention_id}
    mids = sorted(m for m in mention_vecs if m not in blocked)
    if mids and half > 0:
        mat = np.stack([np.asarray(mention_vecs[m], dtype=np.float64) for m in mids])
        scores = mat @ target_vec
        for mid in _top_k_ids(mids, scores, min(half, len(mids))):
            edges.append(LabeledEdge(mention_node(mid), target, 0))
    return edges


@dataclass
class TrainResult:
    """Per-step losses from one segment of training."""

    losses: list[float] = field(default_factory=list)


def train_segment(
    params: ParameterSet,
    state: ClusterState,
    mention_ids: Sequence[str],
    gold_links: Mapping[str, str],
    config: TrainerConfig,
    segment_ordinal: int = 0,
) -> TrainResult:
    """Fit the vector tables on one training segment, in place.

    Mentions are shuffled each epoch; every batch rebuilds its affinity
    graph from gold links under the current tables, resamples capped
    cluster memberships, extracts positives by pruning, mines negatives,
    and applies one gradient step.
    """
    mention_ids = sorted(set(mention_ids))
    missing = [m for m in mention_ids if m not in gold_links]
    if missing:
        raise TrainingError(f"training mentions without gold links: {missing[:5]}")
    for mid in mention_ids:
        params.mention_vector(mid)  # fail fast on absent vectors

    coref_sets: dict[str, list[str]] = {}
    for mid in mention_ids:
        coref_sets.setdefault(gold_links[mid], []).append(mid)
    coref_sets = {e: sorted(ms) for e, ms in coref_sets.items()}
    for eid in coref_sets:
        params.entity_vector(eid)

    segment_vecs = {m: params.mention_vector(m) for m in mention_ids}
    rng = np.random.default_rng([config.seed, segment_ordinal])
    result = TrainResult()

    for _epoch in range(config.epochs):
        order = [mention_ids[i] for i in rng.permutation(len(mention_ids))]
        for lo in range(0, len(order), config.batch_size):
            batch = order[lo : lo + config.batch_size]
            sampled = state.sampled_members(config.mention_cap, rng)
            blend = BlendSpec(blend=config.blend, members=sampled)
            reps = {
                eid: cluster_representation(
                    params.entity_vector(eid),
                    [params.mention_vector(m) for m in sampled.get(eid, ())],
                    config.blend,
                )
                for eid in sorted(params.entities)
            }
            graph = build_batch_graph(
                batch,
                gold_links,
                coref_sets,
                entity_rep_fn=lambda e: reps[e],
                mention_vec_fn=params.mention_vector,
                threshold=config.threshold,
            )
            edges = positive_edges(graph, restrict_targets=batch)
            for mid in batch:
                edges.extend(
                    negative_edges(
                        mid,
                        gold_links[mid],
                        coref_sets[gold_links[mid]],
                        reps,
                        segment_vecs,
                        config.num_negatives,
                        params.mention_vector(mid),
                    )
                )
            result.losses.append(batch_loss(edges, params, blend, config.loss_on))
            grads = loss_gradient(edges, params, blend, config.loss_on)
            params.apply_gradient(grads, config.learning_rate)
            # refresh live views after the in-place update
            segment_vecs = {m: params.mention_vector(m) for m in mention_ids}
    return result


@dataclass
class SegmentOutcome:
    """Everything the continual loop produced for one segment."""

    label: str
    phase: str
    members_before: dict[str, tuple[str, ...]]
    links: dict[str, str]
    losses: list[float] = field(default_factory=list)
    predictions: list[PredictionRecord] = field(default_factory=list)


@dataclass
class ContinualRunResult:
    """Ordered per-segment outcomes plus the final tables."""

    outcomes: list[SegmentOutcome]
    params: ParameterSet

    def outcome(self, label: str) -> SegmentOutcome:
        for o in self.outcomes:
            if o.label == label:
                return o
        raise TrainingError(f"no outcome recorded for segment {label!r}")


def run_continual(
    snapshot: CorpusSnapshot,
    catalog: EntityCatalog,
    params: ParameterSet,
    config: TrainerConfig,
    *,
    k_entities: int = DEFAULT_ENTITY_FAN_IN,
    k_mentions: int = DEFAULT_MENTION_FAN_IN,
    link_threshold: float = math.inf,
    rank_depth: int = 64,
    train: bool = True,
) -> ContinualRunResult:
    """Walk the timeline: train on training segments, link on test ones.

    Cluster memberships always come from the immediately preceding
    segment: gold links if it was a training segment, the loop's own
    predictions if it was a test segment.  Mention fan-in at linking
    time is restricted to mentions of the current segment.
    """
    if len(catalog) == 0:
        raise TrainingError("entity catalog is empty")
    for eid in catalog.ids:
        params.entity_vector(eid)

    state = ClusterState(config.blend)
    outcomes: list[SegmentOutcome] = []
    for segment in snapshot.segments:
        seg_mentions = snapshot.mentions_in_segment(segment.label)
        mention_ids = sorted(m.mention_id for m in seg_mentions)
        members_before = dict(state.members)
        if segment.phase == "train":
            gold = snapshot.gold_links(segment.label)
            losses: list[float] = []
            if train and mention_ids:
                outcome_train = train_segment(
                    params, state, mention_ids, gold, config, segment_ordinal=segment.ordinal
                )
                losses = outcome_train.losses
            links = {m: gold[m] for m in mention_ids if m in gold}
            if len(links) != len(mention_ids):
                missing = sorted(set(mention_ids) - set(links))
                raise TrainingError(
                    f"training segment {segment.label!r} has mentions without gold links: {missing[:5]}"
                )
            outcomes.append(
                SegmentOutcome(
                    label=segment.label,
                    phase=segment.phase,
                    members_before=members_before,
                    links=links,
                    losses=losses,
                )
            )
        else:
            rng = np.random.default_rng([config.seed, 104729 + segment.ordinal])
            sampled = state.sampled_members(config.mention_cap, rng)
            reps = state.cache_representations(
                catalog.ids, params.entity_vector, params.mention_vector, members=sampled
            )
            mention_vecs = {m: params.mention_vector(m) for m in mention_ids}
            links = {}
            predictions: list[PredictionRecord] = []
            if mention_ids:
                graph = build_inference_graph(
                    mention_ids, reps, mention_vecs, k_entities, k_mentions, threshold=link_threshold
                )
                partition = prune_and_cluster(graph)
                links = resolve_segment(partition, reps, mention_vecs)
                by_id = {m.mention_id: m for m in seg_mentions}
                for mid in mention_ids:
                    decision = links[mid]
                    ranking = rank_candidates(mention_vecs[mid], reps, min(rank_depth, len(reps)))
                    ranked = [decision] + [e for e in ranking if e != decision]
                    record = by_id[mid]
                    gold = record.gold_entity
                    jac = None
                    if gold is not None and gold in catalog.records and record.surface.strip():
                        jac = jaccard_char(record.surface, catalog.name(gold))
                    predictions.append(
                        PredictionRecord(
                            mention_id=mid,
                            ranked=tuple(ranked[:rank_depth]),
                            gold_entity=gold,
                            segment=segment.label,
                            jaccard=jac,
                        )
                    )
            outcomes.append(
                SegmentOutcome(
                    label=segment.label,
                    phase=segment.phase,
                    members_before=members_before,
                    links=links,
                    predictions=predictions,
                )
            )
        state.set_members(links)
    return ContinualRunResult(outcomes=outcomes, params=params)
