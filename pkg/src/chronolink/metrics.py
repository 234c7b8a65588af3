"""Linking accuracy, Jaccard binning, Recall@n, and answer-token F1.

Accuracy and recall are reported in percent so the two tables are
directly comparable (top-1 recall equals accuracy).  Jaccard similarity
between a mention surface and an entity name is computed over distinct
characters after lowercasing and whitespace removal, with a
character-bigram variant behind a flag.  Answer F1 follows the common
open-domain-QA convention: lowercase, strip punctuation, drop articles,
collapse whitespace, then token-multiset F1, with the prediction first
cut to its leading sentence.
"""

from __future__ import annotations

import csv
import json
import re
import string
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import MetricsError

BIN_EDGES = (0.2, 0.4, 0.6, 0.8)

ACCURACY_COLUMNS = ("segment", "bin", "n_mentions", "accuracy")
RECALL_COLUMNS = ("segment", "n", "recall")
QA_COLUMNS = ("segment", "variant", "split", "resolution", "mean_f1", "count")

_TERMINATOR_RUN = re.compile(r"([.!?])[.!?]*(?=\s|$)")
_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT = set(string.punctuation)


@dataclass(frozen=True)
class PredictionRecord:
    """One linking decision: ranked candidates against the gold entity."""

    mention_id: str
    ranked: tuple[str, ...]
    gold_entity: str | None
    segment: str
    jaccard: float | None = None

    def __post_init__(self) -> None:
        if not self.ranked:
            raise MetricsError(f"record {self.mention_id!r}: ranked list must be non-empty")
        if len(set(self.ranked)) != len(self.ranked):
            raise MetricsError(f"record {self.mention_id!r}: ranked list contains duplicates")
        if self.jaccard is not None and not 0.0 <= self.jaccard <= 1.0:
            raise MetricsError(f"record {self.mention_id!r}: jaccard {self.jaccard} outside [0, 1]")


def jaccard_char(mention_surface: str, entity_name: str, *, bigrams: bool = False) -> float:
    """Set Jaccard over characters of the two strings.

    Both strings are lowercased and stripped of all whitespace first.
    With ``bigrams`` the sets hold adjacent character pairs instead of
    single characters (a single-character string contributes itself).
    """
    a = "".join(mention_surface.lower().split())
    b = "".join(entity_name.lower().split())
    if not a or not b:
        raise MetricsError("jaccard_char inputs must be non-empty after normalization")
    if bigrams:
        set_a = {a[i : i + 2] for i in range(len(a) - 1)} if len(a) > 1 else {a}
        set_b = {b[i : i + 2] for i in range(len(b) - 1)} if len(b) > 1 else {b}
    else:
        set_a, set_b = set(a), set(b)
    return len(set_a & set_b) / len(set_a | set_b)


def jaccard_bin(value: float) -> int:
    """Bin index 1-5 for half-open 0.2-wide bins, top bin closed at 1."""
    if not 0.0 <= value <= 1.0:
        raise MetricsError(f"jaccard value {value} outside [0, 1]")
    return 1 + sum(value >= edge for edge in BIN_EDGES)


def bin_by_jaccard(records: Iterable[PredictionRecord]) -> dict[int, list[PredictionRecord]]:
    """Group records into the 5 Jaccard bins; counts are conserved."""
    bins: dict[int, list[PredictionRecord]] = {i: [] for i in range(1, 6)}
    for record in records:
        if record.jaccard is None:
            raise MetricsError(f"record {record.mention_id!r} has no jaccard value")
        bins[jaccard_bin(record.jaccard)].append(record)
    return bins


def _accuracy(records: Sequence[PredictionRecord]) -> float:
    if not records:
        raise MetricsError("cannot compute accuracy of an empty group")
    correct = sum(1 for r in records if r.gold_entity is not None and r.ranked[0] == r.gold_entity)
    return 100.0 * correct / len(records)


def linking_accuracy(
    records: Sequence[PredictionRecord],
    group_by: str = "none",
) -> dict[str, float] | dict[int, float]:
    """Top-1 accuracy in percent, optionally grouped.

    ``group_by`` is one of ``none`` (single entry keyed "all"),
    ``segment``, or ``bin``.  Any empty requested group is an error.
    """
    if group_by == "none":
        return {"all": _accuracy(records)}
    if group_by == "segment":
        groups: dict[str, list[PredictionRecord]] = {}
        for r in records:
            groups.setdefault(r.segment, []).append(r)
        if not groups:
            raise MetricsError("cannot compute accuracy of an empty record set")
        return {seg: _accuracy(rs) for seg, rs in sorted(groups.items())}
    if group_by == "bin":
        bins = bin_by_jaccard(records)
        populated = {i: rs for i, rs in bins.items() if rs}
        if not populated:
            raise MetricsError("cannot compute accuracy of an empty record set")
        return {i: _accuracy(rs) for i, rs in populated.items()}
    raise MetricsError(f"group_by must be 'none', 'segment', or 'bin', got {group_by!r}")


def recall_at_n(records: Sequence[PredictionRecord], ns: Sequence[int]) -> dict[int, float]:
    """Percent of records whose gold entity appears in the top n.

    Rankings shorter than n are treated as misses past their end, so no
    padding is required.
    """
    if not records:
        raise MetricsError("cannot compute recall of an empty record set")
    out: dict[int, float] = {}
    for n in ns:
        if n < 1:
            raise MetricsError(f"recall cutoff must be at least 1, got {n}")
        hits = sum(
            1 for r in records if r.gold_entity is not None and r.gold_entity in r.ranked[:n]
        )
        out[n] = 100.0 * hits / len(records)
    return out


def first_sentence(text: str) -> str:
    """Cut at the first sentence terminator that ends a word.

    A terminator is '.', '!', or '?' followed by whitespace or the end
    of the string; a run of terminators counts once and the cut keeps
    only the first of the run.  Text without a terminator is returned
    whole.
    """
    match = _TERMINATOR_RUN.search(text)
    if match is None:
        return text
    return text[: match.start(1) + 1]


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation, drop articles, collapse whitespace."""
    text = text.lower()
    text = "".join(ch for ch in text if ch not in _PUNCT)
    text = _ARTICLES.sub(" ", text)
    return " ".join(text.split())


def qa_f1(prediction: str, gold: str) -> float:
    """Token-multiset F1 between normalized answers.

    The prediction is first restricted to its leading sentence; the gold
    answer is used whole.  Two empty normalizations count as a perfect
    match, one empty as a total miss.
    """
    pred_tokens = normalize_answer(first_sentence(prediction)).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    common = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if common == 0:
        return 0.0
    precision = common / len(pred_tokens)
    recall = common / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class AccuracyRow:
    segment: str
    bin: str
    n_mentions: int
    accuracy: float


@dataclass(frozen=True)
class RecallRow:
    segment: str
    n: int
    recall: float


@dataclass(frozen=True)
class QAF1Row:
    segment: str
    variant: str
    split: str  # hit | miss | all
    resolution: str  # success | failure | all
    mean_f1: float
    count: int


@dataclass(frozen=True)
class MetricsReport:
    """All evaluation tables in one serializable bundle."""

    accuracy: tuple[AccuracyRow, ...] = ()
    recall: tuple[RecallRow, ...] = ()
    qa: tuple[QAF1Row, ...] = ()

    def __post_init__(self) -> None:
        # Per-bin counts must add up to their segment's "all" row.
        totals: dict[str, int] = {}
        bin_sums: dict[str, int] = {}
        for row in self.accuracy:
            if row.bin == "all":
                totals[row.segment] = row.n_mentions
            else:
                bin_sums[row.segment] = bin_sums.get(row.segment, 0) + row.n_mentions
        for segment, total in totals.items():
            if segment in bin_sums and bin_sums[segment] != total:
                raise MetricsError(
                    f"segment {segment!r}: bin counts sum to {bin_sums[segment]} but total row says {total}"
                )


def build_report(
    records: Sequence[PredictionRecord] = (),
    ns: Sequence[int] = (1, 2, 4, 8, 16, 32, 64),
    qa_outcomes: Sequence = (),
) -> MetricsReport:
    """Aggregate predictions and QA outcomes into a MetricsReport.

    Accuracy rows cover each populated (segment, bin) pair plus an
    "all"-bin row per segment and a global "all" segment; recall rows
    mirror the segment grouping.  QA rows aggregate mean F1 for every
    populated (variant, hit/miss, resolution) combination; outcomes with
    errors (f1 of None) are excluded.
    """
    accuracy_rows: list[AccuracyRow] = []
    recall_rows: list[RecallRow] = []
    if records:
        by_segment: dict[str, list[PredictionRecord]] = {}
        for r in records:
            by_segment.setdefault(r.segment, []).append(r)
        scopes: list[tuple[str, list[PredictionRecord]]] = [("all", list(records))]
        scopes += sorted(by_segment.items())
        for segment, rs in scopes:
            accuracy_rows.append(AccuracyRow(segment, "all", len(rs), _accuracy(rs)))
            if all(r.jaccard is not None for r in rs):
                for index, binned in sorted(bin_by_jaccard(rs).items()):
                    if binned:
                        accuracy_rows.append(AccuracyRow(segment, str(index), len(binned), _accuracy(binned)))
            for n, value in recall_at_n(rs, ns).items():
                recall_rows.append(RecallRow(segment, n, value))

    qa_rows: list[QAF1Row] = []
    scored = [o for o in qa_outcomes if getattr(o, "f1", None) is not None]
    if scored:
        by_key: dict[tuple[str, str], list] = {}
        for o in scored:
            by_key.setdefault((o.segment, o.variant), []).append(o)
        for (segment, variant), outcomes in sorted(by_key.items()):
            for split in ("hit", "miss", "all"):
                if split == "hit":
                    pool = [o for o in outcomes if o.hit is True]
                elif split == "miss":
                    pool = [o for o in outcomes if o.hit is False]
                else:
                    pool = outcomes
                for resolution in ("success", "failure", "all"):
                    if resolution == "success":
                        sub = [o for o in pool if o.resolution_ok is True]
                    elif resolution == "failure":
                        sub = [o for o in pool if o.resolution_ok is False]
                    else:
                        sub = pool
                    if sub:
                        mean = sum(o.f1 for o in sub) / len(sub)
                        qa_rows.append(QAF1Row(segment, variant, split, resolution, mean, len(sub)))

    return MetricsReport(accuracy=tuple(accuracy_rows), recall=tuple(recall_rows), qa=tuple(qa_rows))


def emit_report(report: MetricsReport, format: str, path: str | Path) -> None:
    """Write a report deterministically as JSON or sectioned CSV.

    The CSV form holds three header-led sections (accuracy, recall, QA)
    separated by blank lines; an empty report still gets all headers.
    """
    if format == "json":
        payload = {
            "accuracy": [asdict(r) for r in report.accuracy],
            "recall": [asdict(r) for r in report.recall],
            "qa": [asdict(r) for r in report.qa],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")
    elif format == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(ACCURACY_COLUMNS)
            for row in report.accuracy:
                writer.writerow([row.segment, row.bin, row.n_mentions, repr(row.accuracy)])
            writer.writerow([])
            writer.writerow(RECALL_COLUMNS)
            for row in report.recall:
                writer.writerow([row.segment, row.n, repr(row.recall)])
            writer.writerow([])
            writer.writerow(QA_COLUMNS)
            for row in report.qa:
                writer.writerow([row.segment, row.variant, row.split, row.resolution, repr(row.mean_f1), row.count])
    else:
        raise MetricsError(f"format must be 'json' or 'csv', got {format!r}")


def load_report(path: str | Path) -> MetricsReport:
    """Read back a JSON report emitted by emit_report."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    try:
        return MetricsReport(
            accuracy=tuple(AccuracyRow(**r) for r in payload["accuracy"]),
            recall=tuple(RecallRow(**r) for r in payload["recall"]),
            qa=tuple(QAF1Row(**r) for r in payload["qa"]),
        )
    except (KeyError, TypeError) as exc:
        raise MetricsError(f"malformed report file {path}: {exc}") from None
