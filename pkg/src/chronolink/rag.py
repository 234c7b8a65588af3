"""Retrieval-augmented QA plumbing: chunks, index, prompts, clients.

Documents are cut into fixed-size character chunks with a small overlap
and indexed by inner product.  Prompts for the five variants come from
versioned template assets and are instantiated byte-exactly; generation
goes through an opaque synchronous client interface so the harness
never parses model internals.  Everything here is deterministic given
its inputs, which keeps prediction files byte-identical across runs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np

from .corpus import QAPair
from .errors import RagError
from .metrics import qa_f1

logger = logging.getLogger(__name__)

DEFAULT_MAX_CHARS = 1500
DEFAULT_OVERLAP = 10
DEFAULT_TOP_K = 3
DEFAULT_TEMPERATURE = 0.3
DEFAULT_MAX_NEW_TOKENS = 30
COT_STAGE1_TEMPERATURE = 0.1
COT_STAGE1_MAX_NEW_TOKENS = 10

TEMPLATE_VERSION = "v1"

LLM = "LLM"
LLM_ER = "LLM-ER"
RALM = "RaLM"
RALM_COT = "RaLM-CoT"
RALM_ER = "RaLM-ER"
VARIANTS = (LLM, LLM_ER, RALM, RALM_COT, RALM_ER)

_RAG_VARIANTS = (RALM, RALM_COT, RALM_ER)
_ER_VARIANTS = (LLM_ER, RALM_ER)

_TEMPLATE_FILES = {
    LLM: "llm.txt",
    LLM_ER: "llm-er.txt",
    RALM: "ralm.txt",
    RALM_COT: "ralm-cot-stage1.txt",
    "RaLM-CoT-stage2": "ralm-cot-stage2.txt",
    RALM_ER: "ralm-er.txt",
}

_PLACEHOLDER = re.compile(r"\{(question|mention|entity|context|stage1)\}")


@dataclass(frozen=True)
class DocumentChunk:
    """A contiguous character slice of one document."""

    doc_id: str
    chunk_index: int
    start: int
    end: int
    text: str

    def __post_init__(self) -> None:
        if not 0 <= self.start < self.end:
            raise RagError(f"chunk range [{self.start}, {self.end}) is empty or negative")
        if len(self.text) != self.end - self.start:
            raise RagError(
                f"chunk text length {len(self.text)} does not match range [{self.start}, {self.end})"
            )

    @property
    def chunk_id(self) -> str:
        return f"{self.doc_id}#{self.chunk_index:04d}"


def chunk_documents(
    docs: Mapping[str, str],
    max_chars: int = DEFAULT_MAX_CHARS,
    overlap: int = DEFAULT_OVERLAP,
) -> list[DocumentChunk]:
    """Slice documents into overlapping chunks.

    Chunk i of a document covers [i*(max_chars-overlap),
    i*(max_chars-overlap)+max_chars) clipped to the document; a chunk is
    only emitted while it contributes characters past the previous
    chunk's coverage, so pure-overlap tails never appear.  Empty
    documents produce no chunks.
    """
    if not 0 <= overlap < max_chars:
        raise RagError(f"overlap must satisfy 0 <= overlap < max_chars, got {overlap} vs {max_chars}")
    stride = max_chars - overlap
    chunks: list[DocumentChunk] = []
    for doc_id in sorted(docs):
        text = docs[doc_id]
        length = len(text)
        index = 0
        while True:
            start = index * stride
            if length == 0 or (index > 0 and start + overlap >= length):
                break
            end = min(start + max_chars, length)
            chunks.append(DocumentChunk(doc_id=doc_id, chunk_index=index, start=start, end=end, text=text[start:end]))
            if end == length:
                break
            index += 1
    return chunks


class VectorIndex:
    """Inner-product index over chunk vectors, frozen at construction."""

    def __init__(self, vectors: Mapping[str, np.ndarray]) -> None:
        self._ids: tuple[str, ...] = tuple(sorted(vectors))
        dim: int | None = None
        rows: list[np.ndarray] = []
        for chunk_id in self._ids:
            vec = np.asarray(vectors[chunk_id], dtype=np.float64)
            if vec.ndim != 1 or vec.size == 0:
                raise RagError(f"chunk {chunk_id!r}: vector must be a non-empty 1-D array")
            if not np.all(np.isfinite(vec)):
                raise RagError(f"chunk {chunk_id!r}: vector has non-finite components")
            if dim is None:
                dim = int(vec.size)
            elif vec.size != dim:
                raise RagError(f"chunk {chunk_id!r}: dimension {vec.size} does not match index dimension {dim}")
            rows.append(vec)
        self._dim = dim
        self._matrix = np.stack(rows) if rows else np.zeros((0, 0))
        self._matrix.setflags(write=False)

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def dim(self) -> int | None:
        return self._dim

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids

    def scores(self, query: np.ndarray) -> np.ndarray:
        query = np.asarray(query, dtype=np.float64)
        if self._dim is not None and query.shape != (self._dim,):
            raise RagError(f"query has shape {query.shape} but the index holds dimension {self._dim}")
        return self._matrix @ query


def retrieve(query_emb: np.ndarray, index: VectorIndex, k: int = DEFAULT_TOP_K) -> list[tuple[str, float]]:
    """Top-k chunks by inner product, descending, ties by chunk id."""
    if k < 1:
        raise RagError(f"k must be at least 1, got {k}")
    if len(index) == 0:
        raise RagError("cannot retrieve from an empty index")
    scores = index.scores(query_emb)
    order = np.argsort(-scores, kind="stable")  # ids pre-sorted, stable keeps id order on ties
    return [(index.ids[i], float(scores[i])) for i in order[: min(k, len(index))]]


def load_template(name: str) -> str:
    """Read a prompt template asset, dropping its trailing newline."""
    if name not in _TEMPLATE_FILES:
        raise RagError(f"unknown template {name!r}")
    text = (
        resources.files("chronolink")
        .joinpath(f"templates/{TEMPLATE_VERSION}/{_TEMPLATE_FILES[name]}")
        .read_text(encoding="utf-8")
    )
    return text[:-1] if text.endswith("\n") else text


def _instantiate(template: str, fields: Mapping[str, str]) -> str:
    # Single-pass substitution: field values are never re-scanned, so
    # brace sequences inside questions or contexts cannot inject.
    def sub(match: re.Match) -> str:
        key = match.group(1)
        if key not in fields:
            raise RagError(f"template requires field {key!r}")
        return fields[key]

    return _PLACEHOLDER.sub(sub, template)


def join_context(context_chunks: Sequence[str]) -> str:
    """Concatenate retrieved chunk texts in rank order, one per line."""
    return "\n".join(context_chunks)


def build_prompt(
    variant: str,
    question: str,
    mention: str | None = None,
    entity: str | None = None,
    context_chunks: Sequence[str] | None = None,
) -> str:
    """Instantiate the template for a variant, byte-exactly.

    For RaLM-CoT this returns the stage-1 prompt; run_cot assembles the
    stage-2 prompt from the stage-1 answer.
    """
    if variant not in VARIANTS:
        raise RagError(f"unknown prompt variant {variant!r}; expected one of {VARIANTS}")
    fields: dict[str, str] = {"question": question}
    if variant in _ER_VARIANTS:
        if mention is None or entity is None:
            raise RagError(f"variant {variant} requires both mention and entity")
        fields["mention"] = mention
        fields["entity"] = entity
    if variant == RALM_COT:
        if mention is None:
            raise RagError(f"variant {variant} requires a mention")
        fields["mention"] = mention
    if variant in _RAG_VARIANTS:
        if context_chunks is None:
            raise RagError(f"variant {variant} requires context chunks")
        fields["context"] = join_context(context_chunks)
    return _instantiate(load_template(variant), fields)


class GenerationClient(Protocol):
    """Synchronous text generation; the engine treats it as opaque."""

    def generate(self, prompt: str, temperature: float, max_new_tokens: int) -> str: ...


class QueryEmbedder(Protocol):
    """Maps text to a vector compatible with the chunk index."""

    def embed(self, text: str) -> np.ndarray: ...


@dataclass(frozen=True)
class ClientConfig:
    """Connection settings for an HTTP generation endpoint."""

    endpoint: str
    model: str
    temperature: float = DEFAULT_TEMPERATURE
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS
    timeout_ms: int = 30000
    retries: int = 2


class HttpGenerationClient:
    """POSTs prompts to a JSON endpoint and returns its text field.

    The request body is {"model", "prompt", "temperature",
    "max_new_tokens"}; the response must be a JSON object with a "text"
    key.  Failures are retried up to the configured count before an
    error propagates.
    """

    def __init__(self, config: ClientConfig) -> None:
        self.config = config

    def generate(self, prompt: str, temperature: float, max_new_tokens: int) -> str:
        body = json.dumps(
            {
                "model": self.config.model,
                "prompt": prompt,
                "temperature": temperature,
                "max_new_tokens": max_new_tokens,
            }
        ).encode("utf-8")
        last_error: Exception | None = None
        for _attempt in range(self.config.retries + 1):
            request = urllib.request.Request(
                self.config.endpoint, data=body, headers={"Content-Type": "application/json"}
            )
            try:
                with urllib.request.urlopen(request, timeout=self.config.timeout_ms / 1000.0) as response:
                    payload = json.loads(response.read().decode("utf-8"))
                if not isinstance(payload, dict) or "text" not in payload:
                    raise RagError("generation endpoint returned no 'text' field")
                return str(payload["text"])
            except (urllib.error.URLError, TimeoutError, json.JSONDecodeError, RagError) as exc:
                last_error = exc
                time.sleep(0)  # retries are immediate; pacing belongs to the endpoint
        raise RagError(f"generation failed after {self.config.retries + 1} attempts: {last_error}")


class GoldEchoClient:
    """Test stub: answers with the gold answer of the question it sees.

    Pairs are matched by their question text appearing verbatim in the
    prompt, which holds for every template variant.
    """

    def __init__(self, pairs: Iterable[QAPair]) -> None:
        self._pairs = list(pairs)

    def generate(self, prompt: str, temperature: float, max_new_tokens: int) -> str:
        for pair in self._pairs:
            if pair.question in prompt:
                return pair.answer
        raise RagError("gold-echo client saw a prompt with no known question")


class HashingEmbedder:
    """Deterministic feature-hashing text embedder for offline runs.

    Tokens are hashed into signed buckets with a stable digest, so the
    same text always maps to the same vector on any machine.
    """

    def __init__(self, dim: int = 64) -> None:
        if dim < 1:
            raise RagError(f"dim must be at least 1, got {dim}")
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in text.lower().split():
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            index = int.from_bytes(digest[:4], "little") % self.dim
            sign = 1.0 if digest[4] & 1 else -1.0
            vec[index] += sign
        norm = float(np.linalg.norm(vec))
        return vec / norm if norm > 0 else vec


@dataclass(frozen=True)
class CotResult:
    """Both stages of a chain-of-thought generation."""

    answer: str
    stage1_text: str
    stage1_prompt: str
    stage2_prompt: str


def run_cot(
    question: str,
    mention: str,
    context_chunks: Sequence[str],
    client: GenerationClient,
    *,
    temperature: float = DEFAULT_TEMPERATURE,
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS,
) -> CotResult:
    """Two-stage generation: resolve the mention, then answer.

    Stage 1 runs at temperature 0.1 with 10 new tokens and its raw text
    is spliced verbatim into the stage-2 prompt, even when empty or
    multi-sentence.
    """
    stage1_prompt = build_prompt(RALM_COT, question, mention=mention, context_chunks=context_chunks)
    try:
        stage1_text = client.generate(stage1_prompt, COT_STAGE1_TEMPERATURE, COT_STAGE1_MAX_NEW_TOKENS)
    except Exception as exc:
        raise RagError(f"CoT stage 1 generation failed: {exc}") from exc
    stage2_prompt = _instantiate(
        load_template("RaLM-CoT-stage2"),
        {
            "question": question,
            "mention": mention,
            "context": join_context(context_chunks),
            "stage1": stage1_text,
        },
    )
    try:
        answer = client.generate(stage2_prompt, temperature, max_new_tokens)
    except Exception as exc:
        raise RagError(f"CoT stage 2 generation failed: {exc}") from exc
    return CotResult(answer=answer, stage1_text=stage1_text, stage1_prompt=stage1_prompt, stage2_prompt=stage2_prompt)


def parse_qa_gen(text: str) -> tuple[str, str]:
    """Extract the first two top-level brace groups as (question, answer).

    Nested braces are rejected outright; more than two groups is
    tolerated with a logged warning, taking the first two.
    """
    groups: list[str] = []
    current: list[str] | None = None
    for position, ch in enumerate(text):
        if ch == "{":
            if current is not None:
                raise RagError(f"nested brace at position {position}")
            current = []
        elif ch == "}":
            if current is None:
                raise RagError(f"unbalanced closing brace at position {position}")
            groups.append("".join(current))
            current = None
        elif current is not None:
            current.append(ch)
    if current is not None:
        raise RagError("unbalanced opening brace: text ended inside a group")
    if len(groups) < 2:
        raise RagError(f"expected two brace groups, found {len(groups)}")
    if len(groups) > 2:
        logger.warning("parse_qa_gen found %d brace groups; using the first two", len(groups))
    return groups[0], groups[1]


@dataclass(frozen=True)
class QAOutcome:
    """Everything recorded for one QA pair under one variant."""

    qa_id: str
    variant: str
    segment: str
    prompt_sha256: str | None
    prediction: str | None
    f1: float | None
    hit: bool | None
    resolution_ok: bool | None
    retrieved: tuple[str, ...] = ()
    error: str | None = None


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def run_qa(
    pairs: Sequence[QAPair],
    variant: str,
    *,
    generator: GenerationClient,
    embedder: QueryEmbedder | None = None,
    index: VectorIndex | None = None,
    chunks: Mapping[str, DocumentChunk] | None = None,
    resolver: Callable[[QAPair], str | None] | None = None,
    entity_names: Mapping[str, str] | None = None,
    top_k: int = DEFAULT_TOP_K,
    temperature: float = DEFAULT_TEMPERATURE,
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS,
) -> list[QAOutcome]:
    """Run one prompt variant over QA pairs, recording rich metadata.

    Retrieval variants embed the question and pull top_k chunks; ER
    variants resolve the mention to an entity and splice its display
    name into the prompt.  A retrieval hit means some retrieved chunk
    belongs to the pair's evidence document; resolution success means
    the resolver returned the gold entity.  Per-pair failures are
    recorded on the outcome rather than aborting the run.
    """
    if variant not in VARIANTS:
        raise RagError(f"unknown prompt variant {variant!r}; expected one of {VARIANTS}")
    needs_rag = variant in _RAG_VARIANTS
    needs_er = variant in _ER_VARIANTS
    if needs_rag and (embedder is None or index is None or chunks is None):
        raise RagError(f"variant {variant} requires an embedder, an index, and chunk metadata")
    if needs_er and resolver is None:
        raise RagError(f"variant {variant} requires a resolver")

    outcomes: list[QAOutcome] = []
    for pair in pairs:
        retrieved: tuple[str, ...] = ()
        hit: bool | None = None
        resolution_ok: bool | None = None
        try:
            context_texts: list[str] | None = None
            if needs_rag:
                assert embedder is not None and index is not None and chunks is not None
                hits = retrieve(embedder.embed(pair.question), index, top_k)
                retrieved = tuple(cid for cid, _score in hits)
                missing = [cid for cid in retrieved if cid not in chunks]
                if missing:
                    raise RagError(f"retrieved chunk ids without metadata: {missing}")
                context_texts = [chunks[cid].text for cid in retrieved]
                if pair.evidence_doc is not None:
                    hit = any(chunks[cid].doc_id == pair.evidence_doc for cid in retrieved)
                else:
                    hit = False

            entity_display: str | None = None
            if needs_er:
                assert resolver is not None
                resolved = resolver(pair)
                if resolved is None:
                    raise RagError(f"resolver returned no entity for pair {pair.qa_id!r}")
                resolution_ok = resolved == pair.gold_entity
                entity_display = entity_names.get(resolved, resolved) if entity_names else resolved

            if variant == RALM_COT:
                assert context_texts is not None
                cot = run_cot(
                    pair.question,
                    pair.mention,
                    context_texts,
                    generator,
                    temperature=temperature,
                    max_new_tokens=max_new_tokens,
                )
                prompt, prediction = cot.stage2_prompt, cot.answer
            else:
                prompt = build_prompt(
                    variant,
                    pair.question,
                    mention=pair.mention if needs_er else None,
                    entity=entity_display,
                    context_chunks=context_texts,
                )
                prediction = generator.generate(prompt, temperature, max_new_tokens)

            outcomes.append(
                QAOutcome(
                    qa_id=pair.qa_id,
                    variant=variant,
                    segment=pair.segment,
                    prompt_sha256=_sha256(prompt),
                    prediction=prediction,
                    f1=qa_f1(prediction, pair.answer),
                    hit=hit,
                    resolution_ok=resolution_ok,
                    retrieved=retrieved,
                )
            )
        except Exception as exc:
            outcomes.append(
                QAOutcome(
                    qa_id=pair.qa_id,
                    variant=variant,
                    segment=pair.segment,
                    prompt_sha256=None,
                    prediction=None,
                    f1=None,
                    hit=hit,
                    resolution_ok=resolution_ok,
                    retrieved=retrieved,
                    error=str(exc),
                )
            )
    return outcomes


def write_qa_predictions(outcomes: Sequence[QAOutcome], path: str | Path) -> None:
    """Write the predictions file, one JSON object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for o in outcomes:
            fh.write(
                json.dumps(
                    {
                        "qa_id": o.qa_id,
                        "variant": o.variant,
                        "prompt_sha256": o.prompt_sha256,
                        "prediction": o.prediction,
                        "f1": o.f1,
                        "hit": o.hit,
                        "resolution_ok": o.resolution_ok,
                    },
                    sort_keys=True,
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_qa_predictions(path: str | Path) -> list[dict]:
    """Read back a predictions file as plain dicts."""
    rows: list[dict] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RagError(f"line {line_no}: malformed JSON record: {exc}") from None
            for key in ("qa_id", "variant", "prompt_sha256", "prediction", "f1", "hit", "resolution_ok"):
                if key not in row:
                    raise RagError(f"line {line_no}: record is missing required key {key!r}")
            rows.append(row)
    return rows
