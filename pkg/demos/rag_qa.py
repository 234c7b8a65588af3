"""Chunk, retrieve, prompt, and score a tiny QA set offline.

Run from the repository root:

    python3 demos/rag_qa.py

The generation client here is the gold-echo stub, which answers every
question correctly; the point of the demo is the plumbing around it:
stride chunking, inner-product retrieval, byte-stable prompt assembly
for each template variant, and the F1 scoring with its first-sentence
restriction.
"""

from __future__ import annotations

from chronolink.corpus import QAPair
from chronolink.metrics import qa_f1
from chronolink.rag import (
    GoldEchoClient,
    HashingEmbedder,
    VectorIndex,
    build_prompt,
    chunk_documents,
    retrieve,
    run_qa,
)

DOCS = {
    "d-acme": "Acme Corp moved its mill to Selby last spring. The mill makes gear.",
    "d-onyx": "Onyx Ltd still runs its quarry near Dover. The quarry yields ore.",
}

PAIRS = [
    QAPair("q1", "Where is the Acme mill now?", "Acme", "e-acme", "Selby", "0506", "d-acme"),
    QAPair("q2", "Where does Onyx quarry ore?", "Onyx", "e-onyx", "near Dover", "0506", "d-onyx"),
]

NAMES = {"e-acme": "Acme Corp", "e-onyx": "Onyx Ltd"}


def main() -> None:
    print(__doc__)
    chunks = {c.chunk_id: c for c in chunk_documents(DOCS, max_chars=40, overlap=5)}
    print(f"{len(chunks)} chunks at 40 chars with 5 overlap:")
    for cid, chunk in sorted(chunks.items()):
        print(f"  {cid} [{chunk.start:3d},{chunk.end:3d}) {chunk.text!r}")

    embedder = HashingEmbedder(64)
    index = VectorIndex({cid: embedder.embed(c.text) for cid, c in chunks.items()})
    query = "Where is the Acme mill now?"
    print(f"\ntop 3 chunks for {query!r}:")
    for cid, score in retrieve(embedder.embed(query), index, 3):
        print(f"  {score:+.3f}  {cid}")

    print("\nthe same question under each prompt variant:")
    for variant in ("LLM", "LLM-ER", "RaLM", "RaLM-CoT", "RaLM-ER"):
        prompt = build_prompt(
            variant, query, mention="Acme", entity="Acme Corp",
            context_chunks=["Acme Corp moved its mill to Selby last spring."],
        )
        first_line = prompt.split("\n")[0]
        print(f"  {variant:9} | {first_line}")

    outcomes = run_qa(
        PAIRS,
        "RaLM-ER",
        generator=GoldEchoClient(PAIRS),
        embedder=embedder,
        index=index,
        chunks=chunks,
        resolver=lambda pair: pair.gold_entity,
        entity_names=NAMES,
    )
    print("\nRaLM-ER with the gold-echo stub:")
    for o in outcomes:
        print(f"  {o.qa_id}: retrieval hit={o.hit} resolved ok={o.resolution_ok} F1={o.f1:.2f}")

    print("\nthe F1 metric cuts the prediction at its first sentence:")
    generated = "Selby. It also makes gear and sells it abroad."
    print(f"  {generated!r} vs gold 'Selby' -> F1 {qa_f1(generated, 'Selby'):.2f}")


if __name__ == "__main__":
    main()
