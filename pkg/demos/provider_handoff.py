"""Encode with the provider package, then link with the engine.

Run from the repository root:

    python3 demos/provider_handoff.py

The two packages never import each other at runtime.  The provider
writes vector files in the engine's interchange format, and the engine
consumes them through its normal embeddings path, so this script is the
whole integration story: corpus and KB in, vectors out, linking done.

A full pretrained checkpoint is overkill for a demo, so we assemble a
two-layer toy BERT with random weights on the fly.  Its vectors carry
no signal, which means the linking decisions below are arbitrary; what
the demo proves is the plumbing, not the quality.

Needs torch and transformers.  If the provider extra is not installed
the script says so and exits instead of failing.
"""

from __future__ import annotations

import json
import tempfile
from datetime import date
from pathlib import Path

try:
    import torch
    import transformers
    from transformers import BertConfig, BertModel, BertTokenizerFast

    from encoder_provider.pipeline import EncodeJob, encode
    from encoder_provider.records import Window
except ImportError as exc:  # torch stack or provider package absent
    print(f"provider handoff demo skipped: {exc}")
    print("install the provider package first: pip install -e provider")
    raise SystemExit(0)

transformers.utils.logging.disable_progress_bar()

from chronolink.cli import dispatch


def build_toy_model(target: Path) -> None:
    """Save a tiny random BERT whose vocab covers plain ascii text."""
    letters = [chr(c) for c in range(ord("a"), ord("z") + 1)]
    letters += [chr(c) for c in range(ord("A"), ord("Z") + 1)]
    digits = [str(d) for d in range(10)]
    pieces = letters + digits
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    vocab += pieces + ["##" + p for p in pieces] + list(".,!?;:'\"()-/&")
    (target / "vocab.txt").write_text("\n".join(vocab) + "\n", encoding="utf-8")
    tokenizer = BertTokenizerFast(vocab_file=str(target / "vocab.txt"), lowercase=False)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=64,
        max_position_embeddings=96,
        pad_token_id=0,
    )
    torch.manual_seed(7)
    model = BertModel(config)
    model.save_pretrained(target)
    tokenizer.save_pretrained(target)


DOCS = [
    ("d1", date(2023, 5, 12), "Acme Systems shipped a new compiler this spring."),
    ("d2", date(2023, 6, 3), "The Onyx Group bought a foundry near the coast."),
    ("d3", date(2023, 7, 21), "Analysts say Acme doubled its tooling budget."),
    ("d4", date(2023, 8, 9), "Onyx hired two hundred machinists in August."),
]

MENTIONS = [
    ("m1", "d1", "Acme Systems", "e1"),
    ("m2", "d2", "Onyx Group", "e2"),
    ("m3", "d3", "Acme", "e1"),
    ("m4", "d4", "Onyx", "e2"),
]

ENTITIES = [
    ("e1", "Acme Systems", "A compiler and tooling vendor."),
    ("e2", "Onyx Group", "An industrial holding company."),
]


def write_workspace(work: Path) -> None:
    with open(work / "corpus.jsonl", "w", encoding="utf-8") as fh:
        for doc_id, day, text in DOCS:
            fh.write(json.dumps({"kind": "doc", "doc_id": doc_id,
                                 "text": text, "date": day.isoformat()}) + "\n")
        for mention_id, doc_id, surface, gold in MENTIONS:
            text = next(t for d, _, t in DOCS if d == doc_id)
            start = text.index(surface)
            fh.write(json.dumps({
                "kind": "mention", "mention_id": mention_id, "doc_id": doc_id,
                "start": start, "end": start + len(surface),
                "surface": surface, "gold_entity": gold,
            }) + "\n")
    with open(work / "kb.jsonl", "w", encoding="utf-8") as fh:
        for entity_id, name, description in ENTITIES:
            fh.write(json.dumps({"entity_id": entity_id, "name": name,
                                 "description": description}) + "\n")


def main() -> None:
    print(__doc__)
    with tempfile.TemporaryDirectory() as raw:
        work = Path(raw)
        model_dir = work / "toy-model"
        model_dir.mkdir()
        build_toy_model(model_dir)
        write_workspace(work)

        window = Window(date(2023, 5, 1), date(2023, 8, 31), 2)
        job = EncodeJob(
            out=str(work / "enc"),
            kb=str(work / "kb.jsonl"),
            corpus=str(work / "corpus.jsonl"),
            model=str(model_dir),
            budget=64,
            batch_size=8,
            window=window,
        )
        result = encode(job)
        vectors = result.paths[0]
        print(f"provider wrote {vectors}")
        print(f"  dim {result.dim}, {result.entity_count} entities, "
              f"{result.mention_count} mentions, marker init {result.marker_init}")

        config = work / "run.toml"
        config.write_text(
            "[paths]\n"
            f'corpus = "{work}/corpus.jsonl"\n'
            f'kb = "{work}/kb.jsonl"\n'
            f'embeddings = "{vectors}"\n'
            "[timeline]\n"
            'window_start = "2023-05-01"\n'
            'window_end = "2023-08-31"\n'
            "months_per_segment = 2\n"
            "train_segments = 1\n"
            "[trainer]\n"
            "epochs = 1\n"
            "batch_size = 4\n"
            "num_negatives = 2\n"
            "seed = 3\n"
            "[graph]\n"
            "k_entities = 2\n"
            "k_mentions = 2\n"
            "rank_depth = 2\n"
        )
        # Toy weights carry nothing worth training on, so link as-is.
        code = dispatch(["link", "--config", str(config),
                         "--out", str(work / "link"), "--no-train"])
        assert code == 0, f"link exited {code}"

        print("\nengine linked the provider's vectors:")
        with open(work / "link" / "predictions.jsonl", encoding="utf-8") as fh:
            for line in fh:
                row = json.loads(line)
                print(f"  {row['segment']} {row['mention_id']}: "
                      f"picked {row['ranked'][0]}, gold {row['gold_entity']}")


if __name__ == "__main__":
    main()
