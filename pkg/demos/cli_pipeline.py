"""Drive the full CLI pipeline on generated data in a temp directory.

Run from the repository root:

    python3 demos/cli_pipeline.py

This is the same sequence a shell user would run: ingest to check the
inputs, train on the training prefix, link the whole timeline, and eval
the predictions, with every stage writing a manifest that pins the
effective config.  The workspace comes from the synthetic benchmark
generator, so the whole demo is self-contained and deterministic.
"""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

from chronolink.cli import dispatch
from chronolink.corpus import write_corpus
from chronolink.embeddings import write_embeddings_jsonl
from chronolink.synth import SynthConfig, generate_benchmark


def main() -> None:
    print(__doc__)
    with tempfile.TemporaryDirectory() as raw:
        work = Path(raw)
        bench = generate_benchmark(
            SynthConfig(n_entities=8, n_segments=3, train_segments=1,
                        mentions_per_segment=30, dim=16, seed=5)
        )
        write_corpus(bench.snapshot, work / "corpus.jsonl")
        with open(work / "kb.jsonl", "w", encoding="utf-8") as fh:
            for eid in bench.catalog.ids:
                rec = bench.catalog.record(eid)
                fh.write(json.dumps({"entity_id": rec.entity_id, "name": rec.name,
                                     "description": rec.description}) + "\n")
        write_embeddings_jsonl(bench.records, work / "embeddings.jsonl")

        config = work / "run.toml"
        config.write_text(
            "[paths]\n"
            f'corpus = "{work}/corpus.jsonl"\n'
            f'kb = "{work}/kb.jsonl"\n'
            f'embeddings = "{work}/embeddings.jsonl"\n'
            "[timeline]\n"
            'window_start = "2023-05-01"\n'
            f'window_end = "{bench.snapshot.segments[-1].end.isoformat()}"\n'
            "months_per_segment = 2\n"
            "train_segments = 1\n"
            "[trainer]\n"
            "epochs = 1\n"
            "batch_size = 16\n"
            "num_negatives = 4\n"
            "seed = 5\n"
            "[graph]\n"
            "k_entities = 4\n"
            "k_mentions = 2\n"
            "rank_depth = 8\n"
        )

        for argv in (
            ["ingest", "--config", str(config), "--out", str(work / "ingest")],
            ["train", "--config", str(config), "--out", str(work / "train")],
            ["link", "--config", str(config), "--out", str(work / "link")],
            ["eval", "--config", str(config),
             "--predictions", str(work / "link" / "predictions.jsonl"),
             "--out", str(work / "eval")],
        ):
            print(f"$ chronolink {' '.join(argv[:1] + ['...'])}")
            code = dispatch(argv)
            assert code == 0, f"{argv[0]} exited {code}"

        report = json.loads((work / "eval" / "report.json").read_text())
        print("\naccuracy rows from eval's report.json:")
        for row in report["accuracy"]:
            if row["bin"] == "all":
                scope = "overall" if row["segment"] == "all" else f"segment {row['segment']}"
                print(f"  {scope}: {row['accuracy']:.2f}% of {row['n_mentions']}")
        manifest = json.loads((work / "link" / "manifest.json").read_text())
        print(f"\nlink manifest pinned config_hash {manifest['config_hash'][:16]}... seed {manifest['seed']}")


if __name__ == "__main__":
    main()
