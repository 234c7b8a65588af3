"""Embedding stores and the JSONL / binary vector formats."""

from __future__ import annotations

import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chronolink.embeddings import (
    EmbeddingStore,
    VectorRecord,
    read_embeddings_binary,
    read_embeddings_jsonl,
    store_from_records,
    write_embeddings_binary,
    write_embeddings_jsonl,
)
from chronolink.errors import EmbeddingError, MissingEmbeddingError


def rec(id, kind="mention", segment="0506", vector=(1.0, 2.0)):
    return VectorRecord(id=id, kind=kind, segment=segment, vector=np.asarray(vector, dtype=np.float64))


def test_record_validation():
    with pytest.raises(EmbeddingError):
        VectorRecord(id="", kind="mention", segment="", vector=np.ones(2))
    with pytest.raises(EmbeddingError):
        VectorRecord(id="x", kind="thing", segment="", vector=np.ones(2))
    with pytest.raises(EmbeddingError):
        VectorRecord(id="x", kind="mention", segment="", vector=np.array([1.0, np.nan]))


def test_store_uniform_dimension():
    store = EmbeddingStore(dim=2)
    store.add("a", (1.0, 2.0), "mention")
    with pytest.raises(EmbeddingError):
        store.add("b", (1.0, 2.0, 3.0), "mention")


def test_store_freeze_blocks_mutation():
    store = EmbeddingStore(dim=2)
    store.add("a", (1.0, 2.0), "mention")
    store.freeze()
    assert store.frozen
    with pytest.raises(EmbeddingError):
        store.add("b", (1.0, 2.0), "mention")


def test_store_missing_lookup():
    store = EmbeddingStore(dim=2)
    store.add("a", (1.0, 2.0), "mention")
    with pytest.raises(MissingEmbeddingError):
        store.vector("nope")
    with pytest.raises(MissingEmbeddingError):
        store.kind("nope")


def test_store_ids_sorted_by_kind():
    store = store_from_records([rec("b"), rec("a"), rec("e1", kind="entity")])
    assert store.ids("mention") == ("a", "b")
    assert store.ids("entity") == ("e1",)


def test_normalization_on_build():
    store = store_from_records([rec("a", vector=(3.0, 4.0))], normalize=True)
    assert np.allclose(store.vector("a"), [0.6, 0.8])
    with pytest.raises(EmbeddingError):
        store_from_records([rec("z", vector=(0.0, 0.0))], normalize=True)


def test_jsonl_round_trip(tmp_path):
    records = [rec("a"), rec("e", kind="entity", segment="", vector=(0.5, -1.5))]
    path = tmp_path / "emb.jsonl"
    write_embeddings_jsonl(records, path)
    back = read_embeddings_jsonl(path)
    assert back == records
    # duplicate ids within one kind are rejected on read
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines + [lines[0]]) + "\n")
    with pytest.raises(EmbeddingError):
        read_embeddings_jsonl(path)


def test_binary_round_trip(tmp_path):
    table = {"m1": np.array([1.0, 2.0, 3.0]), "m0": np.array([-1.0, 0.5, 0.0])}
    path = tmp_path / "emb.temb"
    write_embeddings_binary(table, path)
    back = read_embeddings_binary(path, kind="mention", segment="0910")
    assert [r.id for r in back] == ["m0", "m1"]
    assert all(r.kind == "mention" and r.segment == "0910" for r in back)
    # float32 storage: round trip exact at float32 resolution
    for r in back:
        assert np.allclose(r.vector, table[r.id], atol=1e-6)


def test_binary_header_layout(tmp_path):
    path = tmp_path / "emb.temb"
    write_embeddings_binary({"a": np.ones(3)}, path)
    raw = path.read_bytes()
    magic, dim, count, reserved = struct.unpack("<4sIII", raw[:16])
    assert magic == b"TEMB"
    assert (dim, count, reserved) == (3, 1, 0)


def test_binary_rejects_corruption(tmp_path):
    path = tmp_path / "emb.temb"
    write_embeddings_binary({"a": np.ones(3)}, path)
    raw = bytearray(path.read_bytes())

    bad_magic = tmp_path / "bad1.temb"
    bad_magic.write_bytes(b"XXXX" + bytes(raw[4:]))
    with pytest.raises(EmbeddingError):
        read_embeddings_binary(bad_magic, kind="mention")

    truncated = tmp_path / "bad2.temb"
    truncated.write_bytes(bytes(raw[:-2]))
    with pytest.raises(EmbeddingError):
        read_embeddings_binary(truncated, kind="mention")

    trailing = tmp_path / "bad3.temb"
    trailing.write_bytes(bytes(raw) + b"\x00")
    with pytest.raises(EmbeddingError):
        read_embeddings_binary(trailing, kind="mention")


def test_binary_refuses_empty_table(tmp_path):
    with pytest.raises(EmbeddingError):
        write_embeddings_binary({}, tmp_path / "e.temb")


@given(
    st.dictionaries(
        st.text(alphabet="abcdefgh0123", min_size=1, max_size=12),
        st.lists(
            st.floats(min_value=-100, max_value=100, allow_nan=False, width=32),
            min_size=4,
            max_size=4,
        ),
        min_size=1,
        max_size=8,
    )
)
@settings(max_examples=40, deadline=None)
def test_binary_round_trip_property(tmp_path_factory, table):
    path = tmp_path_factory.mktemp("emb") / "t.temb"
    arrays = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}
    write_embeddings_binary(arrays, path)
    back = read_embeddings_binary(path, kind="entity")
    assert [r.id for r in back] == sorted(arrays)
    for r in back:
        assert np.array_equal(r.vector, np.asarray(arrays[r.id], dtype=np.float32).astype(np.float64))
