"""Vector storage and interchange for entity and mention embeddings.

Two interchange formats are supported.  The JSONL form carries one
``{"id", "kind", "segment", "vector"}`` object per line and is the
self-describing default.  The binary sidecar is a compact dump for bulk
vectors: a 16-byte little-endian header (magic ``TEMB``, u32 dim, u32
count, u32 reserved zero) followed by one record per vector of u32 id
byte-length, the UTF-8 id bytes, and dim float32 components.  The binary
form stores ids and vectors only, so the reader takes kind and segment
as parameters.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import EmbeddingError, MissingEmbeddingError

MAGIC = b"TEMB"
_HEADER = struct.Struct("<4sIII")

KINDS = ("entity", "mention")


def _as_vector(values, *, context: str) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise EmbeddingError(f"{context}: vector must be a non-empty 1-D array")
    if not np.all(np.isfinite(vec)):
        raise EmbeddingError(f"{context}: vector has non-finite components")
    return vec


@dataclass(frozen=True)
class VectorRecord:
    """One embedding row: a typed id, its segment tag, and the vector."""

    id: str
    kind: str
    segment: str
    vector: np.ndarray

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise EmbeddingError(f"record {self.id!r}: kind must be one of {KINDS}, got {self.kind!r}")
        if not self.id:
            raise EmbeddingError("record id must be a non-empty string")
        object.__setattr__(self, "vector", _as_vector(self.vector, context=f"record {self.id!r}"))

    def __eq__(self, other) -> bool:
        if not isinstance(other, VectorRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.kind == other.kind
            and self.segment == other.segment
            and np.array_equal(self.vector, other.vector)
        )


class EmbeddingStore:
    """In-memory id -> vector table with a uniform dimension.

    Adds are rejected once the store is frozen, so a loaded table can be
    shared across pipeline stages without defensive copying.
    """

    def __init__(self, dim: int | None = None) -> None:
        self._dim = dim
        self._vectors: dict[str, np.ndarray] = {}
        self._kinds: dict[str, str] = {}
        self._frozen = False

    @property
    def dim(self) -> int | None:
        return self._dim

    @property
    def frozen(self) -> bool:
        return self._frozen

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, id: str) -> bool:
        return id in self._vectors

    def add(self, id: str, vector, kind: str) -> None:
        if self._frozen:
            raise EmbeddingError("store is frozen; no further vectors may be added")
        if kind not in KINDS:
            raise EmbeddingError(f"kind must be one of {KINDS}, got {kind!r}")
        if id in self._vectors:
            raise EmbeddingError(f"duplicate embedding id {id!r}")
        vec = _as_vector(vector, context=f"id {id!r}")
        if self._dim is None:
            self._dim = int(vec.size)
        elif vec.size != self._dim:
            raise EmbeddingError(
                f"id {id!r}: vector has dimension {vec.size} but the store holds {self._dim}"
            )
        vec.setflags(write=False)
        self._vectors[id] = vec
        self._kinds[id] = kind

    def freeze(self) -> None:
        self._frozen = True

    def vector(self, id: str) -> np.ndarray:
        try:
            return self._vectors[id]
        except KeyError:
            raise MissingEmbeddingError(f"no embedding stored for id {id!r}") from None

    def kind(self, id: str) -> str:
        if id not in self._kinds:
            raise MissingEmbeddingError(f"no embedding stored for id {id!r}")
        return self._kinds[id]

    def ids(self, kind: str | None = None) -> tuple[str, ...]:
        if kind is None:
            return tuple(sorted(self._vectors))
        if kind not in KINDS:
            raise EmbeddingError(f"kind must be one of {KINDS}, got {kind!r}")
        return tuple(sorted(i for i, k in self._kinds.items() if k == kind))


def store_from_records(records: Iterable[VectorRecord], *, normalize: bool = False) -> EmbeddingStore:
    """Materialize records into a frozen store; optional L2 normalization."""
    store = EmbeddingStore()
    for rec in records:
        vec = rec.vector
        if normalize:
            norm = float(np.linalg.norm(vec))
            if norm == 0.0:
                raise EmbeddingError(f"record {rec.id!r}: cannot normalize a zero vector")
            vec = vec / norm
        store.add(rec.id, vec, rec.kind)
    store.freeze()
    return store


def write_embeddings_jsonl(records: Iterable[VectorRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "id": rec.id,
                        "kind": rec.kind,
                        "segment": rec.segment,
                        "vector": [float(x) for x in rec.vector],
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_embeddings_jsonl(path: str | Path) -> list[VectorRecord]:
    records: list[VectorRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EmbeddingError(f"line {line_no}: malformed JSON record: {exc}") from None
            for key in ("id", "kind", "segment", "vector"):
                if key not in obj:
                    raise EmbeddingError(f"line {line_no}: record is missing required key {key!r}")
            if obj["id"] in seen:
                raise EmbeddingError(f"line {line_no}: duplicate embedding id {obj['id']!r}")
            seen.add(obj["id"])
            records.append(
                VectorRecord(id=obj["id"], kind=obj["kind"], segment=obj["segment"], vector=obj["vector"])
            )
    return records


def write_embeddings_binary(ids_and_vectors: Mapping[str, np.ndarray] | Iterable[VectorRecord], path: str | Path) -> None:
    """Dump id -> vector pairs to the binary sidecar format.

    Accepts either a mapping or VectorRecords; kind and segment tags are
    not stored in this format.
    """
    if isinstance(ids_and_vectors, Mapping):
        items = [(str(i), _as_vector(v, context=f"id {i!r}")) for i, v in ids_and_vectors.items()]
    else:
        items = [(rec.id, rec.vector) for rec in ids_and_vectors]
    if not items:
        raise EmbeddingError("refusing to write an empty binary embedding file")
    items.sort(key=lambda pair: pair[0])  # canonical id order for reproducible bytes
    dim = items[0][1].size
    for id, vec in items:
        if vec.size != dim:
            raise EmbeddingError(f"id {id!r}: vector has dimension {vec.size} but the file holds {dim}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, dim, len(items), 0))
        for id, vec in items:
            raw = id.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(np.asarray(vec, dtype="<f4").tobytes())


def read_embeddings_binary(path: str | Path, *, kind: str, segment: str = "") -> list[VectorRecord]:
    """Read a binary sidecar; kind/segment are supplied, not stored.

    Vectors come back as float64 (widened from the stored float32).
    """
    if kind not in KINDS:
        raise EmbeddingError(f"kind must be one of {KINDS}, got {kind!r}")
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise EmbeddingError("file too short to hold a binary embedding header")
        magic, dim, count, reserved = _HEADER.unpack(header)
        if magic != MAGIC:
            raise EmbeddingError(f"bad magic {magic!r}; expected {MAGIC!r}")
        if dim == 0:
            raise EmbeddingError("header declares zero-dimensional vectors")
        if reserved != 0:
            raise EmbeddingError("reserved header field must be zero")
        records: list[VectorRecord] = []
        vec_bytes = 4 * dim
        for index in range(count):
            len_raw = fh.read(4)
            if len(len_raw) != 4:
                raise EmbeddingError(f"record {index}: truncated id length")
            (id_len,) = struct.unpack("<I", len_raw)
            id_raw = fh.read(id_len)
            if len(id_raw) != id_len:
                raise EmbeddingError(f"record {index}: truncated id bytes")
            raw = fh.read(vec_bytes)
            if len(raw) != vec_bytes:
                raise EmbeddingError(f"record {index}: truncated vector payload")
            vec = np.frombuffer(raw, dtype="<f4").astype(np.float64)
            records.append(VectorRecord(id=id_raw.decode("utf-8"), kind=kind, segment=segment, vector=vec))
        if fh.read(1):
            raise EmbeddingError(f"trailing bytes after the {count} declared records")
    return records
