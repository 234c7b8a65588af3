"""Affinity graphs and greedy constraint-based partitioning.

Graphs are directed and bipartite-ish: edges run entity -> mention or
mention -> mention, and every edge weight is the negated affinity of its
endpoints, so low weight means similar.  Partitioning removes edges
until three constraints hold: no cluster contains two entities, every
retained edge weight is at or below the threshold, and each cluster is
connected.  Edges are examined from worst (highest weight) to best; a
worst edge is dropped when its component already violates the entity
constraint or when its target mention stays reachable from the
component's entity without it.  Final clusters are the undirected
connected components of whatever survives.
"""

from __future__ import annotations

import json
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import GraphError, MissingEmbeddingError

ENTITY = "entity"
MENTION = "mention"

DEFAULT_ENTITY_FAN_IN = 16
DEFAULT_MENTION_FAN_IN = 4


@dataclass(frozen=True, order=True)
class AffinityNode:
    """A graph endpoint: an entity or a mention, identified by ref_id."""

    kind: str
    ref_id: str

    def __post_init__(self) -> None:
        if self.kind not in (ENTITY, MENTION):
            raise GraphError(f"node kind must be '{ENTITY}' or '{MENTION}', got {self.kind!r}")
        if not self.ref_id:
            raise GraphError("node ref_id must be a non-empty string")


def entity_node(entity_id: str) -> AffinityNode:
    return AffinityNode(ENTITY, entity_id)


def mention_node(mention_id: str) -> AffinityNode:
    return AffinityNode(MENTION, mention_id)


@dataclass(frozen=True)
class WeightedEdge:
    """A directed edge whose weight is the negated endpoint affinity."""

    source: AffinityNode
    target: AffinityNode
    weight: float

    def __post_init__(self) -> None:
        if self.target.kind != MENTION:
            raise GraphError(f"edge targets must be mentions, got {self.target}")
        if self.source == self.target:
            raise GraphError(f"self-edge on {self.source}")
        if not math.isfinite(self.weight):
            raise GraphError(f"edge {self.source} -> {self.target} has non-finite weight")


def _edge_sort_key(edge: WeightedEdge) -> tuple:
    return (edge.source.kind, edge.source.ref_id, edge.target.ref_id)


class AffinityGraph:
    """An immutable directed graph with a pruning threshold attached."""

    def __init__(
        self,
        nodes: Iterable[AffinityNode],
        edges: Iterable[WeightedEdge],
        threshold: float = math.inf,
    ) -> None:
        if math.isnan(threshold):
            raise GraphError("threshold must not be NaN")
        edge_map: dict[tuple[AffinityNode, AffinityNode], WeightedEdge] = {}
        for edge in edges:
            key = (edge.source, edge.target)
            if key in edge_map:
                raise GraphError(f"duplicate edge {edge.source} -> {edge.target}")
            edge_map[key] = edge
        node_set = set(nodes)
        for source, target in edge_map:
            node_set.add(source)
            node_set.add(target)
        self.nodes: tuple[AffinityNode, ...] = tuple(sorted(node_set))
        self.edges: tuple[WeightedEdge, ...] = tuple(sorted(edge_map.values(), key=_edge_sort_key))
        self.threshold = float(threshold)

    def __len__(self) -> int:
        return len(self.edges)

    def entity_count(self) -> int:
        return sum(1 for n in self.nodes if n.kind == ENTITY)


def build_batch_graph(
    batch: Sequence[str],
    gold_links: Mapping[str, str],
    coref_sets: Mapping[str, Sequence[str]],
    entity_rep_fn: Callable[[str], np.ndarray],
    mention_vec_fn: Callable[[str], np.ndarray],
    threshold: float = math.inf,
) -> AffinityGraph:
    """Assemble the training graph for one batch of mentions.

    For each batch mention, the gold entity contributes edges to every
    mention of its segment-wide gold coreference set, and every ordered
    pair of distinct mentions within that set is connected.  Weights are
    negated affinities under the supplied vector tables.
    """
    nodes: set[AffinityNode] = set()
    edge_map: dict[tuple[AffinityNode, AffinityNode], float] = {}
    mention_cache: dict[str, np.ndarray] = {}

    def mvec(mid: str) -> np.ndarray:
        if mid not in mention_cache:
            mention_cache[mid] = np.asarray(mention_vec_fn(mid), dtype=np.float64)
        return mention_cache[mid]

    for mention_id in batch:
        if mention_id not in gold_links:
            raise GraphError(f"batch mention {mention_id!r} has no gold link")
        entity_id = gold_links[mention_id]
        if entity_id not in coref_sets:
            raise GraphError(f"entity {entity_id!r} has no gold coreference set")
        coref = sorted(set(coref_sets[entity_id]))
        if mention_id not in coref:
            raise GraphError(
                f"mention {mention_id!r} is missing from the coreference set of its gold entity {entity_id!r}"
            )
        e_node = entity_node(entity_id)
        nodes.add(e_node)
        rep = np.asarray(entity_rep_fn(entity_id), dtype=np.float64)
        for mid in coref:
            m_node = mention_node(mid)
            nodes.add(m_node)
            key = (e_node, m_node)
            if key not in edge_map:
                edge_map[key] = -float(np.dot(rep, mvec(mid)))
        for a in coref:
            for b in coref:
                if a == b:
                    continue
                key = (mention_node(a), mention_node(b))
                if key not in edge_map:
                    edge_map[key] = -float(np.dot(mvec(a), mvec(b)))

    edges = [WeightedEdge(s, t, w) for (s, t), w in edge_map.items()]
    return AffinityGraph(nodes, edges, threshold)


def _top_k_sources(
    scores: np.ndarray,
    k: int,
    exclude: int | None = None,
) -> list[int]:
    """Indices of the k best scores, ties resolved toward lower index.

    Rows are pre-sorted by id, so stable argsort on negated scores gives
    the id-ascending tie break for free.
    """
    order = np.argsort(-scores, kind="stable")
    picked: list[int] = []
    for idx in order:
        if exclude is not None and idx == exclude:
            continue
        picked.append(int(idx))
        if len(picked) == k:
            break
    return picked


def build_inference_graph(
    mention_ids: Sequence[str],
    entity_reps: Mapping[str, np.ndarray],
    mention_vecs: Mapping[str, np.ndarray],
    k_entities: int = DEFAULT_ENTITY_FAN_IN,
    k_mentions: int = DEFAULT_MENTION_FAN_IN,
    threshold: float = math.inf,
) -> AffinityGraph:
    """Assemble the linking graph for one test segment.

    Every mention receives edges from its k_entities highest-affinity
    entity representations and from its k_mentions highest-affinity
    fellow mentions of the same segment.  Affinity ties break toward the
    lexicographically smaller id.
    """
    if k_entities < 1:
        raise GraphError(f"k_entities must be at least 1, got {k_entities}")
    if k_mentions < 0:
        raise GraphError(f"k_mentions must be non-negative, got {k_mentions}")
    if not entity_reps:
        raise GraphError("entity representation table is empty")
    mention_ids = sorted(set(mention_ids))
    for mid in mention_ids:
        if mid not in mention_vecs:
            raise MissingEmbeddingError(f"no embedding stored for id {mid!r}")

    eids = sorted(entity_reps)
    e_mat = np.stack([np.asarray(entity_reps[e], dtype=np.float64) for e in eids])
    nodes = [entity_node(e) for e in eids] + [mention_node(m) for m in mention_ids]
    edges: list[WeightedEdge] = []
    if not mention_ids:
        return AffinityGraph(nodes, edges, threshold)

    m_mat = np.stack([np.asarray(mention_vecs[m], dtype=np.float64) for m in mention_ids])
    if m_mat.shape[1] != e_mat.shape[1]:
        raise GraphError(
            f"mention vectors have dimension {m_mat.shape[1]} but entity representations have {e_mat.shape[1]}"
        )
    entity_scores = e_mat @ m_mat.T  # (n_entities, n_mentions)
    mention_scores = m_mat @ m_mat.T  # (n_mentions, n_mentions)

    for j, mid in enumerate(mention_ids):
        target = mention_node(mid)
        for i in _top_k_sources(entity_scores[:, j], min(k_entities, len(eids))):
            edges.append(WeightedEdge(entity_node(eids[i]), target, -float(entity_scores[i, j])))
        if k_mentions > 0 and len(mention_ids) > 1:
            k = min(k_mentions, len(mention_ids) - 1)
            for i in _top_k_sources(mention_scores[:, j], k, exclude=j):
                edges.append(WeightedEdge(mention_node(mention_ids[i]), target, -float(mention_scores[i, j])))

    return AffinityGraph(nodes, edges, threshold)


@dataclass(frozen=True)
class Cluster:
    """One partition cell: at most one entity plus its mention group."""

    entity: str | None
    mentions: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.mentions)) != len(self.mentions):
            raise GraphError("cluster mentions must be unique")


@dataclass(frozen=True)
class Partition:
    """The clustering outcome plus the edges that survived pruning."""

    clusters: tuple[Cluster, ...]
    retained_edges: tuple[WeightedEdge, ...]
    threshold: float

    def __post_init__(self) -> None:
        seen_mentions: set[str] = set()
        seen_entities: set[str] = set()
        for cluster in self.clusters:
            if cluster.entity is not None:
                if cluster.entity in seen_entities:
                    raise GraphError(f"entity {cluster.entity!r} appears in two clusters")
                seen_entities.add(cluster.entity)
            for mid in cluster.mentions:
                if mid in seen_mentions:
                    raise GraphError(f"mention {mid!r} appears in two clusters")
                seen_mentions.add(mid)

    def cluster_of_mention(self, mention_id: str) -> Cluster:
        for cluster in self.clusters:
            if mention_id in cluster.mentions:
                return cluster
        raise GraphError(f"mention {mention_id!r} is not covered by the partition")

    def mention_count(self) -> int:
        return sum(len(c.mentions) for c in self.clusters)


def _component(
    start: AffinityNode,
    und_adj: Mapping[AffinityNode, Counter],
) -> tuple[int, AffinityNode | None, set[AffinityNode]]:
    """Undirected component scan counting entities, early exit at two."""
    seen = {start}
    queue = deque([start])
    entities = 0
    entity: AffinityNode | None = None
    while queue:
        node = queue.popleft()
        if node.kind == ENTITY:
            entities += 1
            entity = node
            if entities >= 2:
                return entities, entity, seen
        for nbr in und_adj[node]:
            if nbr not in seen:
                seen.add(nbr)
                queue.append(nbr)
    return entities, entity, seen


def _reachable_without(
    source: AffinityNode,
    target: AffinityNode,
    out_adj: Mapping[AffinityNode, set],
    skip: tuple[AffinityNode, AffinityNode],
) -> bool:
    """Directed reachability that ignores the single edge ``skip``."""
    if source == target:
        return True
    seen = {source}
    queue = deque([source])
    while queue:
        node = queue.popleft()
        for nbr in out_adj[node]:
            if node == skip[0] and nbr == skip[1]:
                continue
            if nbr == target:
                return True
            if nbr not in seen:
                seen.add(nbr)
                queue.append(nbr)
    return False


def prune_and_cluster(graph: AffinityGraph, threshold: float | None = None) -> Partition:
    """Greedily remove edges until the partition constraints hold.

    Edges above the threshold are dropped outright.  The survivors are
    then visited from highest weight to lowest (ties toward the smaller
    source id, then target id); a visited edge is removed when its
    undirected component holds two entities, or when the component holds
    exactly one entity and the edge's target mention is still reachable
    from that entity through directed edges once this edge is ignored.
    Clusters are the undirected components of the final graph; every
    node of the input graph is covered, isolated ones as singletons.
    """
    lam = graph.threshold if threshold is None else float(threshold)
    if math.isnan(lam):
        raise GraphError("threshold must not be NaN")

    live: dict[tuple[AffinityNode, AffinityNode], float] = {}
    out_adj: dict[AffinityNode, set[AffinityNode]] = {n: set() for n in graph.nodes}
    und_adj: dict[AffinityNode, Counter] = {n: Counter() for n in graph.nodes}
    for edge in graph.edges:
        if edge.weight > lam:
            continue
        key = (edge.source, edge.target)
        live[key] = edge.weight
        out_adj[edge.source].add(edge.target)
        und_adj[edge.source][edge.target] += 1
        und_adj[edge.target][edge.source] += 1

    def remove(key: tuple[AffinityNode, AffinityNode]) -> None:
        source, target = key
        del live[key]
        out_adj[source].discard(target)
        und_adj[source][target] -= 1
        if und_adj[source][target] == 0:
            del und_adj[source][target]
        und_adj[target][source] -= 1
        if und_adj[target][source] == 0:
            del und_adj[target][source]

    order = sorted(
        live.items(),
        key=lambda kv: (-kv[1], kv[0][0].ref_id, kv[0][1].ref_id, kv[0][0].kind),
    )
    for key, _weight in order:
        source, target = key
        entities, entity, _seen = _component(source, und_adj)
        if entities >= 2:
            remove(key)
            continue
        if entities == 1 and entity is not None:
            if _reachable_without(entity, target, out_adj, skip=key):
                remove(key)

    clusters: list[Cluster] = []
    assigned: set[AffinityNode] = set()
    for node in graph.nodes:  # already sorted
        if node in assigned:
            continue
        _count, entity, component = _component(node, und_adj)
        assigned |= component
        entity_ids = sorted(n.ref_id for n in component if n.kind == ENTITY)
        if len(entity_ids) > 1:
            raise GraphError(f"internal error: component holds entities {entity_ids}")
        clusters.append(
            Cluster(
                entity=entity_ids[0] if entity_ids else None,
                mentions=tuple(sorted(n.ref_id for n in component if n.kind == MENTION)),
            )
        )
    clusters.sort(key=lambda c: (c.entity is None, c.entity or "", c.mentions))

    retained = [
        WeightedEdge(source, target, weight) for (source, target), weight in live.items()
    ]
    retained.sort(key=_edge_sort_key)
    return Partition(clusters=tuple(clusters), retained_edges=tuple(retained), threshold=lam)


def rank_candidates(
    mention_vec: np.ndarray,
    entity_reps: Mapping[str, np.ndarray],
    n: int,
) -> list[str]:
    """Top-n entity ids by affinity, ties toward the smaller id."""
    if n < 1:
        raise GraphError(f"n must be at least 1, got {n}")
    if not entity_reps:
        raise GraphError("entity representation table is empty")
    eids = sorted(entity_reps)
    mat = np.stack([np.asarray(entity_reps[e], dtype=np.float64) for e in eids])
    scores = mat @ np.asarray(mention_vec, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    return [eids[i] for i in order[:n]]


def resolve_segment(
    partition: Partition,
    entity_reps: Mapping[str, np.ndarray],
    mention_vecs: Mapping[str, np.ndarray],
) -> dict[str, str]:
    """Turn a partition into mention -> entity link decisions.

    Mentions sharing a cluster with an entity link to it.  Mentions in
    entity-less clusters fall back to their individually most affine
    entity representation, ties toward the smaller entity id.
    """
    if not entity_reps:
        raise GraphError("cannot resolve mentions against an empty entity table")
    eids = sorted(entity_reps)
    mat = np.stack([np.asarray(entity_reps[e], dtype=np.float64) for e in eids])
    links: dict[str, str] = {}
    for cluster in partition.clusters:
        if cluster.entity is not None:
            for mid in cluster.mentions:
                links[mid] = cluster.entity
        else:
            for mid in cluster.mentions:
                if mid not in mention_vecs:
                    raise MissingEmbeddingError(f"no embedding stored for id {mid!r}")
                scores = mat @ np.asarray(mention_vecs[mid], dtype=np.float64)
                links[mid] = eids[int(np.argmax(scores))]  # argmax takes the first, lowest id
    return dict(sorted(links.items()))


def dump_graph(graph: AffinityGraph, path: str | Path) -> None:
    """Write edges as tab-separated source, target, weight lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for edge in graph.edges:
            fh.write(f"{edge.source.ref_id}\t{edge.target.ref_id}\t{edge.weight!r}\n")


def dump_partition(partition: Partition, path: str | Path) -> None:
    """Write clusters as a JSON object keyed by cluster index."""
    payload = {
        str(i): {"entity": c.entity, "mentions": list(c.mentions)}
        for i, c in enumerate(partition.clusters)
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
