"""Shared fixtures: a tiny local encoder and a small workspace.

The hub is unreachable in CI, so tests build a miniature randomly
initialized BERT with a handwritten WordPiece vocabulary once per
session and load it through local paths only.  The vocabulary carries
single characters plus continuation pieces, so any short ASCII word
tokenizes without [UNK]; the marker tokens are deliberately left out of
the vocabulary to exercise the registration-and-resize path that a
stock base model would take.
"""

from __future__ import annotations

import json
import string

import pytest
import torch


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory) -> str:
    from transformers import BertConfig, BertModel, BertTokenizer

    directory = tmp_path_factory.mktemp("tiny-encoder")
    specials = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    chars = list(string.ascii_lowercase) + list(string.ascii_uppercase) + list(string.digits)
    vocab = specials + chars + ["##" + c for c in chars] + list(".,!?;:'\"()-/&")
    (directory / "vocab.txt").write_text("\n".join(vocab) + "\n")
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=64,
        max_position_embeddings=96,
        type_vocab_size=2,
        pad_token_id=0,
    )
    torch.manual_seed(7)
    model = BertModel(config)
    model.save_pretrained(directory)
    tokenizer = BertTokenizer(str(directory / "vocab.txt"), do_lower_case=False)
    tokenizer.save_pretrained(directory)
    return str(directory)


def write_jsonl(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


@pytest.fixture()
def workspace(tmp_path):
    """corpus.jsonl and kb.jsonl with two segments of short-word text."""
    docs = [
        ("d1", "Acme rose fast this year", "2023-05-15"),
        ("d2", "we saw Acme gain again", "2023-06-20"),
        ("d3", "Onyx fell hard last week", "2023-07-10"),
        ("d4", "the firm Onyx is small", "2023-08-05"),
    ]
    mentions = [
        ("m1", "d1", "Acme", "e1"),
        ("m2", "d2", "Acme", "e1"),
        ("m3", "d3", "Onyx", "e2"),
        ("m4", "d4", "Onyx", "e2"),
    ]
    rows = [{"kind": "doc", "doc_id": d, "text": t, "date": day} for d, t, day in docs]
    for mid, doc_id, surface, gold in mentions:
        text = next(t for d, t, _ in docs if d == doc_id)
        start = text.index(surface)
        rows.append(
            {
                "kind": "mention",
                "mention_id": mid,
                "doc_id": doc_id,
                "start": start,
                "end": start + len(surface),
                "surface": surface,
                "gold_entity": gold,
            }
        )
    corpus = tmp_path / "corpus.jsonl"
    write_jsonl(corpus, rows)
    kb = tmp_path / "kb.jsonl"
    write_jsonl(
        kb,
        [
            {"entity_id": "e1", "name": "Acme", "description": "a firm that makes gear"},
            {"entity_id": "e2", "name": "Onyx", "description": "a firm that sells ore"},
        ],
    )
    return {"corpus": str(corpus), "kb": str(kb), "dir": tmp_path}
