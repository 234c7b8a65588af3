"""Readers and writers for the linking engine's interchange files.

The provider talks to the engine through files only: it reads the
engine's corpus and KB JSONL schemas plus its tab-separated graph dumps,
and writes vectors in the engine's JSONL and binary formats.  The
parsing here re-states those schemas independently; nothing imports the
engine at runtime.

Corpus lines are either documents ``{"kind": "doc", "doc_id", "text",
"date"}`` or mentions ``{"kind": "mention", "mention_id", "doc_id",
"start", "end", "surface"}``.  KB lines carry ``{"entity_id", "name",
"description"}``.  Graph dumps are ``source<TAB>target<TAB>weight``
lines.  Vector JSONL carries ``{"id", "kind", "segment", "vector"}``
per line; the binary form is a 16-byte header (magic ``TEMB``, u32 dim,
u32 count, u32 zero) followed by length-prefixed UTF-8 ids and float32
components, records sorted by id.
"""

from __future__ import annotations

import calendar
import json
import struct
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import InputError

MAGIC = b"TEMB"
_HEADER = struct.Struct("<4sIII")

CONTEXT_CHARS = 512


@dataclass(frozen=True)
class EntityRow:
    entity_id: str
    name: str
    description: str


@dataclass(frozen=True)
class MentionRow:
    mention_id: str
    doc_id: str
    surface: str
    start: int
    end: int
    left_context: str
    right_context: str
    segment: str
    gold_entity: str | None = None


@dataclass(frozen=True)
class Window:
    """Date window carved into equal month spans, labeled by month pair."""

    start: date = date(2023, 5, 1)
    end: date = date(2024, 4, 30)
    months_per_segment: int = 2

    def __post_init__(self) -> None:
        if self.months_per_segment < 1:
            raise InputError("months_per_segment must be at least 1")
        if self.end < self.start:
            raise InputError("window end precedes window start")


def _add_months(d: date, months: int) -> date:
    m = d.month - 1 + months
    year, month = d.year + m // 12, m % 12 + 1
    day = min(d.day, calendar.monthrange(year, month)[1])
    return date(year, month, day)


def segment_spans(window: Window) -> list[tuple[str, date, date]]:
    """Expand a window into (label, start, end-inclusive) spans."""
    spans = []
    start = window.start
    while start <= window.end:
        nxt = _add_months(start, window.months_per_segment)
        end = min(nxt - timedelta(days=1), window.end)
        label = f"{start.month:02d}{_add_months(start, window.months_per_segment - 1).month:02d}"
        spans.append((label, start, end))
        start = nxt
    labels = [s[0] for s in spans]
    if len(set(labels)) != len(labels):
        raise InputError("window spans repeating month labels; shorten it or widen the segments")
    return spans


def segment_label(window: Window, d: date) -> str:
    for label, start, end in segment_spans(window):
        if start <= d <= end:
            return label
    raise InputError(
        f"date {d.isoformat()} falls outside the window "
        f"{window.start.isoformat()}..{window.end.isoformat()}"
    )


def _read_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}: line {line_no}: malformed JSON record: {exc}") from None
            if not isinstance(record, dict):
                raise InputError(f"{path}: line {line_no}: record must be a JSON object")
            yield line_no, record


def _require(record: Mapping, keys: Sequence[str], path, line_no: int) -> None:
    for key in keys:
        if key not in record:
            raise InputError(f"{path}: line {line_no}: record is missing required key {key!r}")


def read_kb(path: str | Path) -> dict[str, EntityRow]:
    """Parse a KB JSONL file into an id -> row table, ids validated."""
    rows: dict[str, EntityRow] = {}
    for line_no, record in _read_jsonl(path):
        _require(record, ("entity_id", "name", "description"), path, line_no)
        entity_id = record["entity_id"]
        if not isinstance(entity_id, str) or not entity_id:
            raise InputError(f"{path}: line {line_no}: entity_id must be a non-empty string")
        if entity_id in rows:
            raise InputError(f"{path}: line {line_no}: duplicate entity_id {entity_id!r}")
        name = record["name"]
        if not isinstance(name, str) or not name.strip():
            raise InputError(f"{path}: line {line_no}: entity {entity_id!r} has an empty name")
        description = record["description"]
        if not isinstance(description, str):
            raise InputError(f"{path}: line {line_no}: entity description must be a string")
        rows[entity_id] = EntityRow(entity_id=entity_id, name=name, description=description)
    return rows


def read_corpus(path: str | Path, window: Window) -> tuple[dict[str, str], list[MentionRow]]:
    """Parse corpus JSONL into documents plus context-bearing mentions.

    Mention contexts are the 512 characters adjacent to the span on each
    side, matching what the engine feeds its own tokenizer.  Segments
    come from the document date under the given window.
    """
    documents: dict[str, str] = {}
    doc_segments: dict[str, str] = {}
    raw: list[tuple[int, dict]] = []
    for line_no, record in _read_jsonl(path):
        kind = record.get("kind")
        if kind == "doc":
            _require(record, ("doc_id", "text", "date"), path, line_no)
            doc_id = record["doc_id"]
            if not isinstance(doc_id, str) or not doc_id:
                raise InputError(f"{path}: line {line_no}: doc_id must be a non-empty string")
            if doc_id in documents:
                raise InputError(f"{path}: line {line_no}: duplicate doc_id {doc_id!r}")
            if not isinstance(record["text"], str):
                raise InputError(f"{path}: line {line_no}: doc text must be a string")
            try:
                doc_date = date.fromisoformat(record["date"])
            except (TypeError, ValueError):
                raise InputError(
                    f"{path}: line {line_no}: doc date must be an ISO YYYY-MM-DD string"
                ) from None
            documents[doc_id] = record["text"]
            doc_segments[doc_id] = segment_label(window, doc_date)
        elif kind == "mention":
            _require(record, ("mention_id", "doc_id", "start", "end", "surface"), path, line_no)
            raw.append((line_no, record))
        else:
            raise InputError(f"{path}: line {line_no}: unknown record kind {kind!r}")

    mentions: list[MentionRow] = []
    seen: set[str] = set()
    for line_no, record in raw:
        mention_id = record["mention_id"]
        if not isinstance(mention_id, str) or not mention_id:
            raise InputError(f"{path}: line {line_no}: mention_id must be a non-empty string")
        if mention_id in seen:
            raise InputError(f"{path}: line {line_no}: duplicate mention_id {mention_id!r}")
        seen.add(mention_id)
        doc_id = record["doc_id"]
        if doc_id not in documents:
            raise InputError(
                f"{path}: line {line_no}: mention {mention_id!r} references unknown doc {doc_id!r}"
            )
        text = documents[doc_id]
        start, end = record["start"], record["end"]
        if not isinstance(start, int) or not isinstance(end, int):
            raise InputError(f"{path}: line {line_no}: mention span bounds must be integers")
        if not (0 <= start < end <= len(text)):
            raise InputError(
                f"{path}: line {line_no}: mention {mention_id!r} span [{start}, {end}) "
                f"is out of bounds for doc {doc_id!r}"
            )
        surface = record["surface"]
        if text[start:end] != surface:
            raise InputError(
                f"{path}: line {line_no}: mention {mention_id!r} surface {surface!r} "
                f"does not match doc text {text[start:end]!r}"
            )
        gold = record.get("gold_entity")
        if gold is not None and (not isinstance(gold, str) or not gold):
            raise InputError(f"{path}: line {line_no}: gold_entity must be a non-empty string when present")
        mentions.append(
            MentionRow(
                mention_id=mention_id,
                doc_id=doc_id,
                surface=surface,
                start=start,
                end=end,
                left_context=text[max(0, start - CONTEXT_CHARS) : start],
                right_context=text[end : end + CONTEXT_CHARS],
                segment=doc_segments[doc_id],
                gold_entity=gold,
            )
        )
    mentions.sort(key=lambda m: m.mention_id)
    return documents, mentions


def read_edges(path: str | Path) -> list[tuple[str, str, float]]:
    """Parse a graph dump: one source, target, weight triple per line."""
    p = Path(path)
    if not p.exists():
        raise InputError(f"edge file {path} does not exist")
    edges: list[tuple[str, str, float]] = []
    with open(p, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise InputError(f"{path}: line {line_no}: expected 3 tab-separated fields, got {len(parts)}")
            source, target, raw_weight = parts
            if not source or not target:
                raise InputError(f"{path}: line {line_no}: empty node id")
            try:
                weight = float(raw_weight)
            except ValueError:
                raise InputError(f"{path}: line {line_no}: weight {raw_weight!r} is not a number") from None
            edges.append((source, target, weight))
    return edges


def write_vectors_jsonl(rows: Sequence[tuple[str, str, str, np.ndarray]], path: str | Path) -> None:
    """Write (id, kind, segment, vector) rows in the engine's JSONL form."""
    with open(path, "w", encoding="utf-8") as fh:
        for id, kind, segment, vec in rows:
            fh.write(
                json.dumps(
                    {
                        "id": id,
                        "kind": kind,
                        "segment": segment,
                        "vector": [float(x) for x in vec],
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def write_vectors_binary(vectors: Mapping[str, np.ndarray], path: str | Path) -> None:
    """Write an id -> vector table in the engine's binary sidecar form."""
    items = sorted((str(i), np.asarray(v, dtype=np.float64)) for i, v in vectors.items())
    if not items:
        raise InputError("refusing to write an empty binary vector file")
    dim = items[0][1].size
    for id, vec in items:
        if vec.ndim != 1 or vec.size != dim:
            raise InputError(f"id {id!r}: vector shape does not match the file dimension {dim}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, dim, len(items), 0))
        for id, vec in items:
            raw = id.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(np.asarray(vec, dtype="<f4").tobytes())
