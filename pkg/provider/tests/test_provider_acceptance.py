"""Acceptance gate for the provider: engine round trip, marker counts."""

from __future__ import annotations

import json

import numpy as np

from encoder_provider.pipeline import EncodeJob, encode


def write_jsonl(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _relative_deviation(ours: np.ndarray, loaded: np.ndarray) -> float:
    scale = np.maximum(np.abs(ours.astype(np.float64)), 1e-12)
    return float(np.max(np.abs(loaded - ours.astype(np.float64)) / scale))


def test_secondary_round_trip(workspace, tiny_model_dir):
    from chronolink.embeddings import (
        read_embeddings_binary,
        read_embeddings_jsonl,
        store_from_records,
    )
    from chronolink.training import ParameterSet

    job = EncodeJob(
        out=str(workspace["dir"] / "rt"),
        kb=workspace["kb"],
        corpus=workspace["corpus"],
        model=tiny_model_dir,
        budget=16,
        batch_size=4,
    )
    result = encode(job)

    records = read_embeddings_jsonl(result.paths[0])
    store = store_from_records(records)
    assert store.dim == result.dim
    assert set(store.ids()) == set(result.vectors)
    worst = max(
        _relative_deviation(result.vectors[id], store.vector(id)) for id in result.vectors
    )
    assert worst <= 1e-6, f"jsonl round trip deviates by {worst:.3e}"

    params = ParameterSet.from_records(records)
    assert np.allclose(params.entity_vector("e1"), result.vectors["e1"])
    assert np.allclose(params.mention_vector("m1"), result.vectors["m1"])

    binary = encode(
        EncodeJob(
            out=str(workspace["dir"] / "rtb"),
            kb=workspace["kb"],
            corpus=workspace["corpus"],
            model=tiny_model_dir,
            budget=16,
            format="binary",
        )
    )
    worst_bin = 0.0
    for path, kind in zip(binary.paths, ("entity", "mention")):
        for rec in read_embeddings_binary(path, kind=kind):
            worst_bin = max(worst_bin, _relative_deviation(binary.vectors[rec.id], rec.vector))
    assert worst_bin <= 1e-6, f"binary round trip deviates by {worst_bin:.3e}"
    print(f"[PASS] round trip: jsonl dev {worst:.1e}, binary dev {worst_bin:.1e} (limit 1e-6)")


def _marker_sample(tmp_path, size: int):
    """A corpus and KB of `size` records with adversarial marker text."""
    rng = np.random.default_rng(500)

    def words(lo, hi):
        n = int(rng.integers(lo, hi))
        out = []
        for _ in range(n):
            length = int(rng.integers(2, 5))
            out.append("".join(chr(97 + int(c)) for c in rng.integers(0, 26, size=length)))
        return out

    n_entities = size // 2
    n_mentions = size - n_entities
    kb_rows = []
    for i in range(n_entities):
        name = " ".join(words(1, 3))
        description = " ".join(words(0, 6))
        if i % 7 == 0:
            description = f"[START] {description} [SEP]"  # markers in raw text
        if i % 11 == 0:
            description = ""
        kb_rows.append({"entity_id": f"e{i:03d}", "name": name, "description": description})

    corpus_rows = []
    for j in range(n_mentions):
        surface = " ".join(words(1, 2))
        left = " ".join(words(0, 5))
        right = " ".join(words(0, 5))
        if j % 5 == 0:
            left = f"{left} [END]".strip()
        text = f"{left} {surface} {right}".strip()
        start = text.index(surface) if left else 0
        corpus_rows.append(
            {"kind": "doc", "doc_id": f"d{j:03d}", "text": text, "date": "2023-05-10"}
        )
        corpus_rows.append(
            {
                "kind": "mention",
                "mention_id": f"m{j:03d}",
                "doc_id": f"d{j:03d}",
                "start": start,
                "end": start + len(surface),
                "surface": surface,
            }
        )
    kb = tmp_path / "kb500.jsonl"
    corpus = tmp_path / "corpus500.jsonl"
    write_jsonl(kb, kb_rows)
    write_jsonl(corpus, corpus_rows)
    return str(kb), str(corpus), n_entities, n_mentions


def test_secondary_token_markers(tmp_path, tiny_model_dir):
    from chronolink.corpus import EntityRecord, MentionRecord
    from chronolink.tokens import entity_tokens, mention_tokens

    kb, corpus, n_entities, n_mentions = _marker_sample(tmp_path, 500)
    job = EncodeJob(
        out=str(tmp_path / "sample"),
        kb=kb,
        corpus=corpus,
        model=tiny_model_dir,
        budget=12,
        batch_size=64,
    )
    result = encode(job)
    assert result.entity_count == n_entities
    assert result.mention_count == n_mentions

    checked = 0
    for id, seq in result.sequences.items():
        if id.startswith("e"):
            assert seq.count("[NAME]") == 1, f"{id}: NAME count {seq.count('[NAME]')}"
            assert seq.count("[START]") == 0 and seq.count("[END]") == 0
        else:
            assert seq.count("[START]") == 1, f"{id}: START count {seq.count('[START]')}"
            assert seq.count("[END]") == 1, f"{id}: END count {seq.count('[END]')}"
            assert seq.count("[NAME]") == 0
        assert seq[0] == "[CLS]" and seq[-1] == "[SEP]"
        checked += 1
    assert checked == 500

    # the emitted sequences also match the engine's own pattern builders
    kb_rows = [json.loads(l) for l in open(kb, encoding="utf-8")]
    for row in kb_rows:
        record = EntityRecord(entity_id=row["entity_id"], name=row["name"], description=row["description"])
        assert result.sequences[row["entity_id"]] == entity_tokens(record, 12).tokens
    docs = {}
    for row in (json.loads(l) for l in open(corpus, encoding="utf-8")):
        if row["kind"] == "doc":
            docs[row["doc_id"]] = row["text"]
        else:
            text = docs[row["doc_id"]]
            record = MentionRecord(
                mention_id=row["mention_id"],
                doc_id=row["doc_id"],
                surface=row["surface"],
                start=row["start"],
                end=row["end"],
                left_context=text[max(0, row["start"] - 512) : row["start"]],
                right_context=text[row["end"] : row["end"] + 512],
                segment="0506",
            )
            assert result.sequences[row["mention_id"]] == mention_tokens(record, 12).tokens
    print(f"[PASS] marker counts: 500/500 sequences carry exactly one NAME or START/END pair")
