"""Batch jobs: encode vectors for the engine, or fine-tune the encoder.

Both jobs consume the engine's corpus/KB files and emit write-once
outputs.  Fine-tuning takes its positive and negative pairs from graph
dump files exported by the engine and optimizes the same loss the
engine uses: per-edge binary cross-entropy on inner-product affinities,
averaged within each target mention and then across targets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch

from .encoder import DEFAULT_MODEL, TextEncoder
from .errors import ConfigError, InputError
from .records import (
    EntityRow,
    MentionRow,
    Window,
    read_corpus,
    read_edges,
    read_kb,
    segment_spans,
    write_vectors_binary,
    write_vectors_jsonl,
)
from .sequences import MIN_BUDGET, entity_sequence, mention_sequence

DEFAULT_BUDGET = 128
DEFAULT_BATCH = 32
DEFAULT_EPOCHS = 5
DEFAULT_LR = 3e-5

FORMATS = ("jsonl", "binary")


@dataclass(frozen=True)
class EncodeJob:
    """One batch encoding run over a KB and/or a corpus segment."""

    out: str
    kb: str | None = None
    corpus: str | None = None
    model: str = DEFAULT_MODEL
    budget: int = DEFAULT_BUDGET
    batch_size: int = DEFAULT_BATCH
    segment: str | None = None
    format: str = "jsonl"
    window: Window = field(default_factory=Window)

    def __post_init__(self) -> None:
        if self.kb is None and self.corpus is None:
            raise ConfigError("an encode job needs a kb path, a corpus path, or both")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}, got {self.format!r}")
        if self.budget < MIN_BUDGET:
            raise ConfigError(f"token budget must be at least {MIN_BUDGET}, got {self.budget}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be at least 1, got {self.batch_size}")


@dataclass
class EncodeResult:
    """What a run produced, with the in-memory arrays for inspection."""

    dim: int
    entity_count: int
    mention_count: int
    paths: list[str]
    marker_init: str
    sequences: dict[str, tuple[str, ...]]
    vectors: dict[str, np.ndarray]


def _entity_sequences(rows: Mapping[str, EntityRow], budget: int) -> dict[str, tuple[str, ...]]:
    return {
        eid: entity_sequence(row.name, row.description, budget, ref=eid)
        for eid, row in sorted(rows.items())
    }


def _mention_sequences(rows: Sequence[MentionRow], budget: int) -> dict[str, tuple[str, ...]]:
    return {
        row.mention_id: mention_sequence(
            row.surface, row.left_context, row.right_context, budget, ref=row.mention_id
        )
        for row in rows
    }


def encode(job: EncodeJob) -> EncodeResult:
    """Run one encode job and write the vector file(s)."""
    entity_rows: dict[str, EntityRow] = read_kb(job.kb) if job.kb else {}
    mention_rows: list[MentionRow] = []
    if job.corpus:
        _, mention_rows = read_corpus(job.corpus, job.window)
        if job.segment is not None:
            labels = [s[0] for s in segment_spans(job.window)]
            if job.segment not in labels:
                raise ConfigError(f"segment {job.segment!r} is not a label of the window: {labels}")
            mention_rows = [m for m in mention_rows if m.segment == job.segment]
    if not entity_rows and not mention_rows:
        raise InputError("nothing to encode: no entities and no mentions after filtering")

    sequences = _entity_sequences(entity_rows, job.budget)
    sequences.update(_mention_sequences(mention_rows, job.budget))

    encoder = TextEncoder(job.model)
    entity_ids = sorted(entity_rows)
    mention_ids = [m.mention_id for m in mention_rows]
    ordered = entity_ids + mention_ids
    texts = [" ".join(sequences[i]) for i in ordered]
    matrix = encoder.encode(texts, refs=ordered, batch_size=job.batch_size)
    vectors = {i: matrix[n] for n, i in enumerate(ordered)}

    segment_of = {m.mention_id: m.segment for m in mention_rows}
    out = Path(job.out)
    out.mkdir(parents=True, exist_ok=True)
    paths: list[str] = []
    if job.format == "jsonl":
        rows = [(i, "entity", "", vectors[i]) for i in entity_ids]
        rows += [(i, "mention", segment_of[i], vectors[i]) for i in mention_ids]
        target = out / "vectors.jsonl"
        write_vectors_jsonl(rows, target)
        paths.append(str(target))
    else:
        # The binary form is kind-less, so each kind gets its own file.
        if entity_ids:
            target = out / "vectors-entities.temb"
            write_vectors_binary({i: vectors[i] for i in entity_ids}, target)
            paths.append(str(target))
        if mention_ids:
            target = out / "vectors-mentions.temb"
            write_vectors_binary({i: vectors[i] for i in mention_ids}, target)
            paths.append(str(target))
    return EncodeResult(
        dim=encoder.dim,
        entity_count=len(entity_ids),
        mention_count=len(mention_ids),
        paths=paths,
        marker_init=encoder.marker_init,
        sequences=sequences,
        vectors=vectors,
    )


@dataclass(frozen=True)
class FinetuneJob:
    """One fine-tuning run over engine-exported edge files."""

    out: str
    corpus: str
    kb: str
    positives: str
    negatives: str
    model: str = DEFAULT_MODEL
    budget: int = DEFAULT_BUDGET
    batch_size: int = DEFAULT_BATCH
    epochs: int = DEFAULT_EPOCHS
    learning_rate: float = DEFAULT_LR
    seed: int = 0
    train_segments: tuple[str, ...] | None = None
    window: Window = field(default_factory=Window)

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be at least 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be at least 1, got {self.batch_size}")
        if self.budget < MIN_BUDGET:
            raise ConfigError(f"token budget must be at least {MIN_BUDGET}, got {self.budget}")


@dataclass
class FinetuneResult:
    checkpoint: str
    edge_count: int
    epoch_losses: list[float]
    holdout_before: float | None
    holdout_after: float | None
    marker_init: str


def _edge_loss(
    embeddings: Mapping[str, torch.Tensor],
    batch: Sequence[tuple[str, str, float]],
) -> torch.Tensor:
    """Mean over targets of the per-target mean BCE on affinities."""
    by_target: dict[str, list[tuple[str, float]]] = {}
    for source, target, label in batch:
        by_target.setdefault(target, []).append((source, label))
    totals = []
    for target, pairs in sorted(by_target.items()):
        terms = []
        for source, label in pairs:
            logit = (embeddings[source] * embeddings[target]).sum()
            terms.append(
                torch.nn.functional.binary_cross_entropy_with_logits(
                    logit, torch.tensor(label, dtype=logit.dtype)
                )
            )
        totals.append(torch.stack(terms).mean())
    return torch.stack(totals).mean()


def finetune(job: FinetuneJob) -> FinetuneResult:
    """Fine-tune the encoder on exported positive/negative edges."""
    entity_rows = read_kb(job.kb)
    _, mention_rows = read_corpus(job.corpus, job.window)
    mention_by_id = {m.mention_id: m for m in mention_rows}

    labeled: list[tuple[str, str, float]] = []
    for path, label in ((job.positives, 1.0), (job.negatives, 0.0)):
        for source, target, _weight in read_edges(path):
            labeled.append((source, target, label))
    if not labeled:
        raise InputError("no edges found in the positive/negative files")

    for source, target, _label in labeled:
        if target not in mention_by_id:
            raise InputError(f"edge target {target!r} is not a corpus mention")
        if source not in entity_rows and source not in mention_by_id:
            raise InputError(f"edge source {source!r} is neither a KB entity nor a corpus mention")
    if job.train_segments is not None:
        allowed = set(job.train_segments)
        for source, target, _label in labeled:
            for mid in (source, target):
                seg = mention_by_id[mid].segment if mid in mention_by_id else None
                if seg is not None and seg not in allowed:
                    raise InputError(
                        f"mention {mid!r} belongs to segment {seg!r}, outside the "
                        f"training segments {sorted(allowed)}"
                    )

    sequences: dict[str, tuple[str, ...]] = {}
    for source, target, _label in labeled:
        for id in (source, target):
            if id in sequences:
                continue
            if id in entity_rows:
                row = entity_rows[id]
                sequences[id] = entity_sequence(row.name, row.description, job.budget, ref=id)
            else:
                m = mention_by_id[id]
                sequences[id] = mention_sequence(
                    m.surface, m.left_context, m.right_context, job.budget, ref=id
                )
    texts = {id: " ".join(seq) for id, seq in sequences.items()}

    torch.manual_seed(job.seed)
    rng = np.random.default_rng(job.seed)
    order = rng.permutation(len(labeled))
    n_holdout = max(1, len(labeled) // 10) if len(labeled) >= 5 else 0
    holdout = [labeled[i] for i in order[:n_holdout]]
    train = [labeled[i] for i in order[n_holdout:]]

    encoder = TextEncoder(job.model)

    def eval_loss(edges: Sequence[tuple[str, str, float]]) -> float | None:
        if not edges:
            return None
        ids = sorted({i for s, t, _ in edges for i in (s, t)})
        encoder.model.eval()
        with torch.no_grad():
            emb = encoder.encode_train([texts[i] for i in ids], ids)
            table = {i: emb[n] for n, i in enumerate(ids)}
            return float(_edge_loss(table, edges))

    holdout_before = eval_loss(holdout)
    optimizer = torch.optim.Adam(encoder.model.parameters(), lr=job.learning_rate)
    epoch_losses: list[float] = []
    for _epoch in range(job.epochs):
        encoder.model.train()
        perm = rng.permutation(len(train))
        seen: list[float] = []
        for lo in range(0, len(train), job.batch_size):
            batch = [train[i] for i in perm[lo : lo + job.batch_size]]
            ids = sorted({i for s, t, _ in batch for i in (s, t)})
            emb = encoder.encode_train([texts[i] for i in ids], ids)
            table = {i: emb[n] for n, i in enumerate(ids)}
            loss = _edge_loss(table, batch)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            seen.append(float(loss.detach()))
        epoch_losses.append(sum(seen) / len(seen) if seen else 0.0)
    holdout_after = eval_loss(holdout)

    out = Path(job.out)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint = out / "checkpoint"
    encoder.save(checkpoint)
    summary = {
        "edge_count": len(labeled),
        "epochs": job.epochs,
        "epoch_losses": epoch_losses,
        "holdout_after": holdout_after,
        "holdout_before": holdout_before,
        "holdout_size": len(holdout),
        "seed": job.seed,
    }
    with open(out / "finetune.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return FinetuneResult(
        checkpoint=str(checkpoint),
        edge_count=len(labeled),
        epoch_losses=epoch_losses,
        holdout_before=holdout_before,
        holdout_after=holdout_after,
        marker_init=encoder.marker_init,
    )
