"""Corpus, knowledge-base, and QA ingestion with timeline segmentation.

Input files are newline-delimited JSON.  A corpus file mixes two record
kinds: ``{"kind": "doc", "doc_id", "text", "date"}`` and
``{"kind": "mention", "mention_id", "doc_id", "start", "end", "surface",
"gold_entity"?}``.  Loading assigns every document to a time segment by
its date and materializes mention context windows, so downstream code
never touches raw files again.
"""

from __future__ import annotations

import calendar
import json
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import CorpusError

# Characters of document text kept on each side of a mention span.
DEFAULT_CONTEXT_CHARS = 512

_PHASES = ("train", "test")


@dataclass(frozen=True)
class EntityRecord:
    """One knowledge-base entry: a name plus its descriptive text."""

    entity_id: str
    name: str
    description: str
    revision_time: str | None = None

    @property
    def degenerate(self) -> bool:
        return not self.description.strip()


@dataclass(frozen=True)
class MentionRecord:
    """A mention span resolved against its document, with local context."""

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
class TimeSegment:
    """One slice of the timeline, labeled by its start/end months."""

    label: str
    ordinal: int
    phase: str
    start: date
    end: date  # inclusive

    def __post_init__(self) -> None:
        if self.phase not in _PHASES:
            raise CorpusError(f"segment phase must be one of {_PHASES}, got {self.phase!r}")


@dataclass(frozen=True)
class SegmentSpec:
    """Rule for carving a date window into contiguous equal segments.

    The window is split into spans of ``months_per_segment`` months; the
    first ``train_segments`` of them are the training phase and the rest
    are the test phase, so every training segment precedes every test
    segment.
    """

    window_start: date = date(2023, 5, 1)
    window_end: date = date(2024, 4, 30)
    months_per_segment: int = 2
    train_segments: int = 3

    def __post_init__(self) -> None:
        if self.months_per_segment < 1:
            raise CorpusError("months_per_segment must be at least 1")
        if self.window_end < self.window_start:
            raise CorpusError("window_end precedes window_start")
        if self.train_segments < 0:
            raise CorpusError("train_segments must be non-negative")


def _add_months(d: date, months: int) -> date:
    m = d.month - 1 + months
    year, month = d.year + m // 12, m % 12 + 1
    day = min(d.day, calendar.monthrange(year, month)[1])
    return date(year, month, day)


def build_timeline(spec: SegmentSpec) -> tuple[TimeSegment, ...]:
    """Expand a SegmentSpec into ordered, contiguous TimeSegments."""
    segments: list[TimeSegment] = []
    start = spec.window_start
    ordinal = 0
    while start <= spec.window_end:
        nxt = _add_months(start, spec.months_per_segment)
        end = min(nxt - timedelta(days=1), spec.window_end)
        label = f"{start.month:02d}{_add_months(start, spec.months_per_segment - 1).month:02d}"
        phase = "train" if ordinal < spec.train_segments else "test"
        segments.append(TimeSegment(label=label, ordinal=ordinal, phase=phase, start=start, end=end))
        start = nxt
        ordinal += 1
    if spec.train_segments > len(segments):
        raise CorpusError(
            f"train_segments={spec.train_segments} exceeds the {len(segments)} segments in the window"
        )
    labels = [s.label for s in segments]
    if len(set(labels)) != len(labels):
        raise CorpusError("window spans repeating month labels; shorten it or widen the segments")
    return tuple(segments)


def segment_for_date(timeline: Sequence[TimeSegment], d: date) -> TimeSegment:
    for seg in timeline:
        if seg.start <= d <= seg.end:
            return seg
    raise CorpusError(
        f"date {d.isoformat()} falls outside the timeline window "
        f"{timeline[0].start.isoformat()}..{timeline[-1].end.isoformat()}"
    )


@dataclass(frozen=True)
class CorpusSnapshot:
    """Immutable view of a loaded corpus: documents, mentions, timeline."""

    documents: dict[str, str]
    doc_dates: dict[str, date]
    doc_segments: dict[str, str]
    mentions: tuple[MentionRecord, ...]
    segments: tuple[TimeSegment, ...]

    def mentions_in_segment(self, label: str) -> tuple[MentionRecord, ...]:
        if label not in {s.label for s in self.segments}:
            raise CorpusError(f"unknown segment label {label!r}")
        return tuple(m for m in self.mentions if m.segment == label)

    def gold_links(self, label: str | None = None) -> dict[str, str]:
        """mention_id -> gold entity, for mentions that carry one."""
        out: dict[str, str] = {}
        for m in self.mentions:
            if m.gold_entity is not None and (label is None or m.segment == label):
                out[m.mention_id] = m.gold_entity
        return out

    def mention(self, mention_id: str) -> MentionRecord:
        for m in self.mentions:
            if m.mention_id == mention_id:
                return m
        raise CorpusError(f"unknown mention id {mention_id!r}")


def _require(record: Mapping, keys: Sequence[str], line_no: int) -> None:
    for key in keys:
        if key not in record:
            raise CorpusError(f"line {line_no}: record is missing required key {key!r}")


def _read_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {line_no}: malformed JSON record: {exc}") from None
            if not isinstance(record, dict):
                raise CorpusError(f"line {line_no}: record must be a JSON object")
            yield line_no, record


def load_corpus(
    path: str | Path,
    format: str = "jsonl",
    *,
    spec: SegmentSpec | None = None,
    context_chars: int = DEFAULT_CONTEXT_CHARS,
) -> CorpusSnapshot:
    """Parse a corpus file into a validated CorpusSnapshot.

    Raises CorpusError on malformed records, span violations, duplicate
    ids, unknown doc references, or dates outside the timeline window.
    """
    if format != "jsonl":
        raise CorpusError(f"unsupported corpus format {format!r}; only 'jsonl' is implemented")
    timeline = build_timeline(spec or SegmentSpec())

    documents: dict[str, str] = {}
    doc_dates: dict[str, date] = {}
    raw_mentions: list[tuple[int, dict]] = []
    for line_no, record in _read_jsonl(path):
        kind = record.get("kind")
        if kind == "doc":
            _require(record, ("doc_id", "text", "date"), line_no)
            doc_id = record["doc_id"]
            if not isinstance(doc_id, str) or not doc_id:
                raise CorpusError(f"line {line_no}: doc_id must be a non-empty string")
            if doc_id in documents:
                raise CorpusError(f"line {line_no}: duplicate doc_id {doc_id!r}")
            if not isinstance(record["text"], str):
                raise CorpusError(f"line {line_no}: doc text must be a string")
            try:
                doc_date = date.fromisoformat(record["date"])
            except (TypeError, ValueError):
                raise CorpusError(
                    f"line {line_no}: doc date must be an ISO YYYY-MM-DD string, got {record['date']!r}"
                ) from None
            documents[doc_id] = record["text"]
            doc_dates[doc_id] = doc_date
        elif kind == "mention":
            _require(record, ("mention_id", "doc_id", "start", "end", "surface"), line_no)
            raw_mentions.append((line_no, record))
        else:
            raise CorpusError(f"line {line_no}: unknown record kind {kind!r}")

    doc_segments = {doc_id: segment_for_date(timeline, d).label for doc_id, d in doc_dates.items()}

    mentions: list[MentionRecord] = []
    seen_ids: set[str] = set()
    for line_no, record in raw_mentions:
        mention_id = record["mention_id"]
        if not isinstance(mention_id, str) or not mention_id:
            raise CorpusError(f"line {line_no}: mention_id must be a non-empty string")
        if mention_id in seen_ids:
            raise CorpusError(f"line {line_no}: duplicate mention_id {mention_id!r}")
        seen_ids.add(mention_id)
        doc_id = record["doc_id"]
        if doc_id not in documents:
            raise CorpusError(f"line {line_no}: mention {mention_id!r} references unknown doc {doc_id!r}")
        text = documents[doc_id]
        start, end = record["start"], record["end"]
        if not isinstance(start, int) or not isinstance(end, int):
            raise CorpusError(f"line {line_no}: mention span bounds must be integers")
        if not (0 <= start < end <= len(text)):
            raise CorpusError(
                f"line {line_no}: mention {mention_id!r} span [{start}, {end}) is out of bounds "
                f"for doc {doc_id!r} of length {len(text)}"
            )
        surface = record["surface"]
        if text[start:end] != surface:
            raise CorpusError(
                f"line {line_no}: mention {mention_id!r} surface {surface!r} does not match "
                f"doc text {text[start:end]!r}"
            )
        segment = doc_segments[doc_id]
        declared = record.get("segment")
        if declared is not None and declared != segment:
            raise CorpusError(
                f"line {line_no}: mention {mention_id!r} declares segment {declared!r} "
                f"but its document date falls in {segment!r}"
            )
        gold = record.get("gold_entity")
        if gold is not None and (not isinstance(gold, str) or not gold):
            raise CorpusError(f"line {line_no}: gold_entity must be a non-empty string when present")
        mentions.append(
            MentionRecord(
                mention_id=mention_id,
                doc_id=doc_id,
                surface=surface,
                start=start,
                end=end,
                left_context=text[max(0, start - context_chars) : start],
                right_context=text[end : end + context_chars],
                segment=segment,
                gold_entity=gold,
            )
        )

    mentions.sort(key=lambda m: m.mention_id)
    return CorpusSnapshot(
        documents=documents,
        doc_dates=doc_dates,
        doc_segments=doc_segments,
        mentions=tuple(mentions),
        segments=timeline,
    )


def write_corpus(snapshot: CorpusSnapshot, path: str | Path) -> None:
    """Serialize a snapshot back to corpus JSONL; inverse of load_corpus."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc_id in sorted(snapshot.documents):
            fh.write(
                json.dumps(
                    {
                        "kind": "doc",
                        "doc_id": doc_id,
                        "text": snapshot.documents[doc_id],
                        "date": snapshot.doc_dates[doc_id].isoformat(),
                    },
                    sort_keys=True,
                    ensure_ascii=False,
                )
                + "\n"
            )
        for m in snapshot.mentions:
            record = {
                "kind": "mention",
                "mention_id": m.mention_id,
                "doc_id": m.doc_id,
                "start": m.start,
                "end": m.end,
                "surface": m.surface,
            }
            if m.gold_entity is not None:
                record["gold_entity"] = m.gold_entity
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class ValidationIssue:
    """A non-fatal finding from an audit pass over loaded records."""

    kind: str
    record_id: str
    detail: str


def validate_mention_spans(snapshot: CorpusSnapshot) -> list[ValidationIssue]:
    """Audit a snapshot that may have been built programmatically.

    Returns one issue per violated invariant instead of raising, so a
    caller can report all problems at once.
    """
    issues: list[ValidationIssue] = []
    known_labels = {s.label for s in snapshot.segments}
    seen: set[str] = set()
    for m in snapshot.mentions:
        if m.mention_id in seen:
            issues.append(ValidationIssue("duplicate-id", m.mention_id, "mention_id appears more than once"))
        seen.add(m.mention_id)
        if m.doc_id not in snapshot.documents:
            issues.append(ValidationIssue("unknown-doc", m.mention_id, f"doc {m.doc_id!r} not in snapshot"))
            continue
        text = snapshot.documents[m.doc_id]
        if not (0 <= m.start < m.end <= len(text)):
            issues.append(
                ValidationIssue(
                    "span-out-of-bounds",
                    m.mention_id,
                    f"span [{m.start}, {m.end}) outside doc of length {len(text)}",
                )
            )
            continue
        if text[m.start : m.end] != m.surface:
            issues.append(
                ValidationIssue(
                    "surface-mismatch",
                    m.mention_id,
                    f"surface {m.surface!r} != doc text {text[m.start:m.end]!r}",
                )
            )
        if m.segment not in known_labels:
            issues.append(ValidationIssue("unknown-segment", m.mention_id, f"label {m.segment!r} not in timeline"))
    return issues


@dataclass
class EntityCatalog:
    """All knowledge-base entities, keyed by id, plus audit findings."""

    records: dict[str, EntityRecord] = field(default_factory=dict)
    issues: list[ValidationIssue] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, entity_id: str) -> bool:
        return entity_id in self.records

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.records))

    def name(self, entity_id: str) -> str:
        if entity_id not in self.records:
            raise CorpusError(f"unknown entity id {entity_id!r}")
        return self.records[entity_id].name

    def record(self, entity_id: str) -> EntityRecord:
        if entity_id not in self.records:
            raise CorpusError(f"unknown entity id {entity_id!r}")
        return self.records[entity_id]


def load_kb(path: str | Path) -> EntityCatalog:
    """Parse a knowledge-base JSONL file into an EntityCatalog.

    Empty descriptions are accepted but flagged as degenerate issues;
    duplicate ids and empty names are hard errors.
    """
    catalog = EntityCatalog()
    for line_no, record in _read_jsonl(path):
        _require(record, ("entity_id", "name", "description"), line_no)
        entity_id = record["entity_id"]
        if not isinstance(entity_id, str) or not entity_id:
            raise CorpusError(f"line {line_no}: entity_id must be a non-empty string")
        if entity_id in catalog.records:
            raise CorpusError(f"line {line_no}: duplicate entity_id {entity_id!r}")
        name = record["name"]
        if not isinstance(name, str) or not name.strip():
            raise CorpusError(f"line {line_no}: entity {entity_id!r} has an empty name")
        description = record["description"]
        if not isinstance(description, str):
            raise CorpusError(f"line {line_no}: entity description must be a string")
        entity = EntityRecord(
            entity_id=entity_id,
            name=name,
            description=description,
            revision_time=record.get("revision_time"),
        )
        if entity.degenerate:
            catalog.issues.append(
                ValidationIssue("degenerate-description", entity_id, "description is empty")
            )
        catalog.records[entity_id] = entity
    return catalog


@dataclass(frozen=True)
class QAPair:
    """One evaluation question tied to a mention and its gold entity."""

    qa_id: str
    question: str
    mention: str
    gold_entity: str
    answer: str
    segment: str
    evidence_doc: str | None = None

    def __post_init__(self) -> None:
        n = self.question.count(self.mention) if self.mention else 0
        if n != 1:
            raise CorpusError(
                f"QA pair {self.qa_id!r}: mention {self.mention!r} must appear exactly once "
                f"in the question, found {n} occurrences"
            )


def load_qa(path: str | Path, *, known_segments: Iterable[str] | None = None) -> list[QAPair]:
    """Parse a QA JSONL file; optionally validates segment labels."""
    labels = set(known_segments) if known_segments is not None else None
    pairs: list[QAPair] = []
    seen: set[str] = set()
    for line_no, record in _read_jsonl(path):
        _require(record, ("qa_id", "question", "mention", "gold_entity", "answer", "segment"), line_no)
        qa_id = record["qa_id"]
        if qa_id in seen:
            raise CorpusError(f"line {line_no}: duplicate qa_id {qa_id!r}")
        seen.add(qa_id)
        if labels is not None and record["segment"] not in labels:
            raise CorpusError(f"line {line_no}: unknown segment label {record['segment']!r}")
        pairs.append(
            QAPair(
                qa_id=qa_id,
                question=record["question"],
                mention=record["mention"],
                gold_entity=record["gold_entity"],
                answer=record["answer"],
                segment=record["segment"],
                evidence_doc=record.get("evidence_doc"),
            )
        )
    return pairs
