"""Command-line entry point wiring ingestion, training, linking, and QA.

One TOML config file plus full flag override (flag beats config beats
default).  Every run writes a manifest carrying the effective config
hash, the seed, and library versions, and all outputs are deterministic
for a given config and seed: no timestamps, sorted keys, stable float
repr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path
from types import SimpleNamespace
from typing import Any, Mapping, Sequence

import numpy as np

try:
    import tomllib  # Python 3.11+
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from . import __version__
from .affinity import ClusterState
from .corpus import SegmentSpec, load_corpus, load_kb, load_qa, write_corpus
from .embeddings import (
    read_embeddings_binary,
    read_embeddings_jsonl,
    store_from_records,
    write_embeddings_binary,
    write_embeddings_jsonl,
)
from .errors import ChronolinkError, ConfigError
from .metrics import PredictionRecord, build_report, emit_report, load_report
from .rag import (
    ClientConfig,
    GoldEchoClient,
    HashingEmbedder,
    HttpGenerationClient,
    VectorIndex,
    VARIANTS,
    chunk_documents,
    run_qa,
    write_qa_predictions,
)
from .synth import SynthConfig, aggregate_benchmark, write_benchmark_report
from .training import ParameterSet, TrainerConfig, run_continual, train_segment

_TRAINER_KEYS = (
    "threshold",
    "num_negatives",
    "blend",
    "batch_size",
    "learning_rate",
    "epochs",
    "mention_cap",
    "seed",
    "loss_on",
)
_GRAPH_KEYS = ("k_entities", "k_mentions", "threshold", "rank_depth")


def _load_toml(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {path!r} does not exist")
    try:
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path!r} is not valid TOML: {exc}") from None


def _section(config: Mapping, name: str) -> dict:
    value = config.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"config section [{name}] must be a table")
    return dict(value)


def _pick(flag_value: Any, config_value: Any, default: Any) -> Any:
    if flag_value is not None:
        return flag_value
    if config_value is not None:
        return config_value
    return default


def _resolve_path(args: argparse.Namespace, paths: Mapping, key: str, required: bool = True) -> str | None:
    value = _pick(getattr(args, key.replace("-", "_"), None), paths.get(key), None)
    if value is None:
        if required:
            raise ConfigError(f"missing required path {key!r} (flag --{key} or [paths].{key})")
        return None
    if not Path(value).exists():
        raise ConfigError(f"configured path {key!r} does not exist: {value}")
    return str(value)


def _out_dir(args: argparse.Namespace, paths: Mapping) -> Path:
    value = _pick(getattr(args, "out", None), paths.get("out"), None)
    if value is None:
        raise ConfigError("missing required output directory (flag --out or [paths].out)")
    out = Path(value)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _canonical(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(payload: Mapping) -> str:
    """Stable digest of an effective run configuration."""
    return hashlib.sha256(_canonical(payload).encode("utf-8")).hexdigest()


def _write_manifest(out: Path, command: str, payload: Mapping, seed: int) -> None:
    manifest = {
        "command": command,
        "config": payload,
        "config_hash": config_hash(payload),
        "seed": seed,
        "versions": {
            "chronolink": __version__,
            "numpy": np.__version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
        },
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _trainer_config(args: argparse.Namespace, config: Mapping) -> TrainerConfig:
    section = _section(config, "trainer")
    unknown = set(section) - set(_TRAINER_KEYS) - {"optimizer"}
    if unknown:
        raise ConfigError(f"unknown [trainer] keys: {sorted(unknown)}")
    values = {}
    defaults = TrainerConfig()
    for key in _TRAINER_KEYS:
        values[key] = _pick(getattr(args, key, None), section.get(key), getattr(defaults, key))
    values["optimizer"] = section.get("optimizer", defaults.optimizer)
    return TrainerConfig(**values)


def _graph_options(args: argparse.Namespace, config: Mapping) -> dict:
    section = _section(config, "graph")
    unknown = set(section) - set(_GRAPH_KEYS)
    if unknown:
        raise ConfigError(f"unknown [graph] keys: {sorted(unknown)}")
    return {
        "k_entities": int(_pick(getattr(args, "k_entities", None), section.get("k_entities"), 16)),
        "k_mentions": int(_pick(getattr(args, "k_mentions", None), section.get("k_mentions"), 4)),
        "threshold": float(_pick(getattr(args, "link_threshold", None), section.get("threshold"), math.inf)),
        "rank_depth": int(_pick(getattr(args, "rank_depth", None), section.get("rank_depth"), 64)),
    }


def _segment_spec(config: Mapping) -> SegmentSpec:
    section = _section(config, "timeline")
    spec = SegmentSpec()
    kwargs = {}
    if "window_start" in section:
        from datetime import date

        kwargs["window_start"] = date.fromisoformat(str(section["window_start"]))
    if "window_end" in section:
        from datetime import date

        kwargs["window_end"] = date.fromisoformat(str(section["window_end"]))
    if "months_per_segment" in section:
        kwargs["months_per_segment"] = int(section["months_per_segment"])
    if "train_segments" in section:
        kwargs["train_segments"] = int(section["train_segments"])
    if kwargs:
        from dataclasses import replace

        spec = replace(spec, **kwargs)
    return spec


def _load_params(path: str) -> ParameterSet:
    records = read_embeddings_jsonl(path)
    store_from_records(records)  # validates dimensions and duplicates
    return ParameterSet.from_records(records)


def _prediction_rows(records: Sequence[PredictionRecord]) -> list[dict]:
    return [
        {
            "mention_id": r.mention_id,
            "segment": r.segment,
            "gold_entity": r.gold_entity,
            "jaccard": r.jaccard,
            "ranked": list(r.ranked),
        }
        for r in records
    ]


def _write_jsonl(rows: Sequence[Mapping], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")


def cmd_ingest(args: argparse.Namespace) -> int:
    config = _load_toml(args.config)
    paths = _section(config, "paths")
    corpus_path = _resolve_path(args, paths, "corpus")
    kb_path = _resolve_path(args, paths, "kb")
    out = _out_dir(args, paths)
    spec = _segment_spec(config)

    snapshot = load_corpus(corpus_path, spec=spec)
    catalog = load_kb(kb_path)
    write_corpus(snapshot, out / "corpus.jsonl")
    summary = {
        "documents": len(snapshot.documents),
        "mentions": len(snapshot.mentions),
        "entities": len(catalog),
        "segments": {
            s.label: {
                "phase": s.phase,
                "mentions": sum(1 for m in snapshot.mentions if m.segment == s.label),
            }
            for s in snapshot.segments
        },
        "kb_issues": [
            {"kind": i.kind, "record_id": i.record_id, "detail": i.detail} for i in catalog.issues
        ],
    }
    with open(out / "ingest-summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    payload = {"command": "ingest", "corpus": corpus_path, "kb": kb_path}
    _write_manifest(out, "ingest", payload, seed=0)
    return 0


def cmd_embed_import(args: argparse.Namespace) -> int:
    config = _load_toml(args.config)
    paths = _section(config, "paths")
    source = _resolve_path(args, paths, "embeddings")
    out = _out_dir(args, paths)

    if args.format == "binary":
        if args.kind is None:
            raise ConfigError("binary embedding imports require --kind (the format stores no kinds)")
        records = read_embeddings_binary(source, kind=args.kind, segment=args.segment or "")
    else:
        records = read_embeddings_jsonl(source)
    store_from_records(records)  # validation only
    write_embeddings_jsonl(records, out / "embeddings.jsonl")
    payload = {
        "command": "embed-import",
        "source": source,
        "format": args.format,
        "kind": args.kind,
        "records": len(records),
    }
    _write_manifest(out, "embed-import", payload, seed=0)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = _load_toml(args.config)
    paths = _section(config, "paths")
    corpus_path = _resolve_path(args, paths, "corpus")
    kb_path = _resolve_path(args, paths, "kb")
    embeddings_path = _resolve_path(args, paths, "embeddings")
    out = _out_dir(args, paths)
    trainer = _trainer_config(args, config)
    spec = _segment_spec(config)

    snapshot = load_corpus(corpus_path, spec=spec)
    catalog = load_kb(kb_path)
    params = _load_params(embeddings_path)
    for eid in catalog.ids:
        params.entity_vector(eid)

    state = ClusterState(trainer.blend)
    losses: list[float] = []
    last_label = ""
    for segment in snapshot.segments:
        if segment.phase != "train":
            break
        mention_ids = sorted(m.mention_id for m in snapshot.mentions_in_segment(segment.label))
        gold = snapshot.gold_links(segment.label)
        if mention_ids:
            result = train_segment(params, state, mention_ids, gold, trainer, segment_ordinal=segment.ordinal)
            losses.extend(result.losses)
        state.set_members({m: gold[m] for m in mention_ids if m in gold})
        last_label = segment.label

    write_embeddings_binary(dict(sorted(params.entities.items())), out / "checkpoint-entities.temb")
    write_embeddings_binary(dict(sorted(params.mentions.items())), out / "checkpoint-mentions.temb")
    payload = {
        "command": "train",
        "corpus": corpus_path,
        "kb": kb_path,
        "embeddings": embeddings_path,
        "trainer": {k: getattr(trainer, k) for k in _TRAINER_KEYS},
    }
    checkpoint = {
        "segment": last_label,
        "step": len(losses),
        "loss": losses[-1] if losses else None,
        "seed": trainer.seed,
        "config_hash": config_hash(payload),
    }
    with open(out / "checkpoint.json", "w", encoding="utf-8") as fh:
        json.dump(checkpoint, fh, sort_keys=True, indent=2)
        fh.write("\n")
    _write_manifest(out, "train", payload, seed=trainer.seed)
    return 0


def cmd_link(args: argparse.Namespace) -> int:
    config = _load_toml(args.config)
    paths = _section(config, "paths")
    corpus_path = _resolve_path(args, paths, "corpus")
    kb_path = _resolve_path(args, paths, "kb")
    embeddings_path = _resolve_path(args, paths, "embeddings")
    out = _out_dir(args, paths)
    trainer = _trainer_config(args, config)
    graph_opts = _graph_options(args, config)
    spec = _segment_spec(config)

    snapshot = load_corpus(corpus_path, spec=spec)
    catalog = load_kb(kb_path)
    params = _load_params(embeddings_path)

    result = run_continual(
        snapshot,
        catalog,
        params,
        trainer,
        k_entities=graph_opts["k_entities"],
        k_mentions=graph_opts["k_mentions"],
        link_threshold=graph_opts["threshold"],
        rank_depth=graph_opts["rank_depth"],
        train=not args.no_train,
    )
    records = [r for outcome in result.outcomes for r in outcome.predictions]
    _write_jsonl(_prediction_rows(records), out / "predictions.jsonl")
    links = {o.label: dict(sorted(o.links.items())) for o in result.outcomes}
    with open(out / "links.json", "w", encoding="utf-8") as fh:
        json.dump(links, fh, sort_keys=True, indent=2)
        fh.write("\n")
    payload = {
        "command": "link",
        "corpus": corpus_path,
        "kb": kb_path,
        "embeddings": embeddings_path,
        "trainer": {k: getattr(trainer, k) for k in _TRAINER_KEYS},
        "graph": graph_opts,
        "no_train": bool(args.no_train),
    }
    _write_manifest(out, "link", payload, seed=trainer.seed)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = _load_toml(args.config)
    paths = _section(config, "paths")
    out = _out_dir(args, paths)
    predictions_path = _resolve_path(args, paths, "predictions")
    metrics_section = _section(config, "metrics")
    ns = metrics_section.get("recall_ns", [1, 2, 4, 8, 16, 32, 64])
    if args.recall_ns:
        ns = [int(n) for n in args.recall_ns.split(",")]

    records = []
    with open(predictions_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            records.append(
                PredictionRecord(
                    mention_id=row["mention_id"],
                    ranked=tuple(row["ranked"]),
                    gold_entity=row.get("gold_entity"),
                    segment=row["segment"],
                    jaccard=row.get("jaccard"),
                )
            )

    qa_outcomes = []
    qa_predictions_path = _resolve_path(args, paths, "qa-predictions", required=False)
    if qa_predictions_path:
        qa_path = _resolve_path(args, paths, "qa")
        from .rag import read_qa_predictions

        pairs = {p.qa_id: p for p in load_qa(qa_path)}
        for row in read_qa_predictions(qa_predictions_path):
            if row["qa_id"] not in pairs:
                raise ConfigError(f"qa prediction {row['qa_id']!r} has no pair in {qa_path}")
            qa_outcomes.append(
                SimpleNamespace(
                    segment=pairs[row["qa_id"]].segment,
                    variant=row["variant"],
                    f1=row["f1"],
                    hit=row["hit"],
                    resolution_ok=row["resolution_ok"],
                )
            )

    report = build_report(records, ns=ns, qa_outcomes=qa_outcomes)
    emit_report(report, "json", out / "report.json")
    emit_report(report, "csv", out / "report.csv")
    payload = {
        "command": "eval",
        "predictions": predictions_path,
        "qa_predictions": qa_predictions_path,
        "recall_ns": list(ns),
    }
    _write_manifest(out, "eval", payload, seed=0)
    return 0


def _build_resolver(path: str | None):
    if path is None:
        return None
    table: dict[tuple[str, str], str] = {}
    fallback: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if "mention" not in row or "entity_id" not in row:
                raise ConfigError("resolution rows need 'mention' and 'entity_id' keys")
            if row.get("segment") is not None:
                table[(row["mention"], row["segment"])] = row["entity_id"]
            fallback.setdefault(row["mention"], row["entity_id"])

    def resolver(pair):
        return table.get((pair.mention, pair.segment)) or fallback.get(pair.mention)

    return resolver


def cmd_qa(args: argparse.Namespace) -> int:
    config = _load_toml(args.config)
    paths = _section(config, "paths")
    qa_path = _resolve_path(args, paths, "qa")
    corpus_path = _resolve_path(args, paths, "corpus")
    kb_path = _resolve_path(args, paths, "kb", required=False)
    resolutions_path = _resolve_path(args, paths, "resolutions", required=False)
    out = _out_dir(args, paths)
    qa_section = _section(config, "qa")
    spec = _segment_spec(config)

    variant = _pick(args.variant, qa_section.get("variant"), "RaLM")
    if variant not in VARIANTS:
        raise ConfigError(f"unknown prompt variant {variant!r}; expected one of {VARIANTS}")
    top_k = int(_pick(args.top_k, qa_section.get("top_k"), 3))
    embed_dim = int(_pick(None, qa_section.get("embed_dim"), 64))
    temperature = float(_pick(None, qa_section.get("temperature"), 0.3))
    max_new_tokens = int(_pick(None, qa_section.get("max_new_tokens"), 30))
    client_kind = _pick(args.client, qa_section.get("client"), "gold-echo")

    snapshot = load_corpus(corpus_path, spec=spec)
    pairs = load_qa(qa_path, known_segments=[s.label for s in snapshot.segments])

    if client_kind == "gold-echo":
        generator = GoldEchoClient(pairs)
    elif client_kind == "http":
        client_section = _section(config, "client")
        if not client_section.get("endpoint"):
            raise ConfigError("http client requires [client].endpoint")
        generator = HttpGenerationClient(
            ClientConfig(
                endpoint=client_section["endpoint"],
                model=client_section.get("model", ""),
                temperature=temperature,
                max_new_tokens=max_new_tokens,
                timeout_ms=int(client_section.get("timeout_ms", 30000)),
                retries=int(client_section.get("retries", 2)),
            )
        )
    else:
        raise ConfigError(f"unknown client kind {client_kind!r}; expected 'gold-echo' or 'http'")

    chunks = chunk_documents(snapshot.documents)
    chunk_map = {c.chunk_id: c for c in chunks}
    embedder = HashingEmbedder(embed_dim)
    index = VectorIndex({c.chunk_id: embedder.embed(c.text) for c in chunks})

    entity_names = None
    if kb_path:
        catalog = load_kb(kb_path)
        entity_names = {eid: catalog.name(eid) for eid in catalog.ids}

    outcomes = run_qa(
        pairs,
        variant,
        generator=generator,
        embedder=embedder,
        index=index,
        chunks=chunk_map,
        resolver=_build_resolver(resolutions_path),
        entity_names=entity_names,
        top_k=top_k,
        temperature=temperature,
        max_new_tokens=max_new_tokens,
    )
    write_qa_predictions(outcomes, out / "qa-predictions.jsonl")
    payload = {
        "command": "qa",
        "qa": qa_path,
        "corpus": corpus_path,
        "kb": kb_path,
        "variant": variant,
        "top_k": top_k,
        "embed_dim": embed_dim,
        "client": client_kind,
        "temperature": temperature,
        "max_new_tokens": max_new_tokens,
    }
    _write_manifest(out, "qa", payload, seed=0)
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    config = _load_toml(args.config)
    paths = _section(config, "paths")
    report_path = _resolve_path(args, paths, "report")
    out = _out_dir(args, paths)
    report = load_report(report_path)
    emit_report(report, args.format, out / f"report.{args.format}")
    payload = {"command": "report", "report": report_path, "format": args.format}
    _write_manifest(out, "report", payload, seed=0)
    return 0


def cmd_synth_bench(args: argparse.Namespace) -> int:
    config = _load_toml(args.config)
    paths = _section(config, "paths")
    out = _out_dir(args, paths)
    section = _section(config, "synth")

    synth = SynthConfig(
        n_entities=int(_pick(args.entities, section.get("n_entities"), 20)),
        n_segments=int(_pick(args.segments, section.get("n_segments"), 4)),
        train_segments=int(_pick(None, section.get("train_segments"), 2)),
        mentions_per_segment=int(_pick(args.mentions, section.get("mentions_per_segment"), 100)),
        dim=int(_pick(None, section.get("dim"), 32)),
        drift=float(_pick(None, section.get("drift"), SynthConfig.drift)),
        kb_noise=float(_pick(None, section.get("kb_noise"), SynthConfig.kb_noise)),
        noise_lo=float(_pick(None, section.get("noise_lo"), SynthConfig.noise_lo)),
        noise_hi=float(_pick(None, section.get("noise_hi"), SynthConfig.noise_hi)),
        seed=int(_pick(args.seed, section.get("seed"), 0)),
    )
    n_seeds = int(_pick(args.seeds, section.get("n_seeds"), 10))
    report = aggregate_benchmark(synth, n_seeds=n_seeds)
    write_benchmark_report(report, out / "bench-report.json")
    payload = {
        "command": "synth-bench",
        "synth": {
            "n_entities": synth.n_entities,
            "n_segments": synth.n_segments,
            "train_segments": synth.train_segments,
            "mentions_per_segment": synth.mentions_per_segment,
            "dim": synth.dim,
            "drift": synth.drift,
            "kb_noise": synth.kb_noise,
            "noise_lo": synth.noise_lo,
            "noise_hi": synth.noise_hi,
            "seed": synth.seed,
        },
        "n_seeds": n_seeds,
    }
    _write_manifest(out, "synth-bench", payload, seed=synth.seed)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chronolink",
        description="Time-segmented entity resolution with continual cluster adaptation.",
    )
    parser.add_argument("--version", action="version", version=f"chronolink {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="TOML run configuration")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("ingest", help="validate and normalize a corpus and knowledge base")
    common(p)
    p.add_argument("--corpus", help="corpus JSONL path")
    p.add_argument("--kb", help="knowledge-base JSONL path")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("embed-import", help="validate and normalize an embedding file")
    common(p)
    p.add_argument("--embeddings", help="embedding file path")
    p.add_argument("--format", choices=["jsonl", "binary"], default="jsonl")
    p.add_argument("--kind", choices=["entity", "mention"], help="record kind for binary imports")
    p.add_argument("--segment", help="segment tag for binary imports")
    p.set_defaults(func=cmd_embed_import)

    def trainer_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--corpus")
        p.add_argument("--kb")
        p.add_argument("--embeddings")
        p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--learning-rate", dest="learning_rate", type=float)
        p.add_argument("--blend", type=float)
        p.add_argument("--num-negatives", dest="num_negatives", type=int)
        p.add_argument("--mention-cap", dest="mention_cap", type=int)
        p.add_argument("--threshold", type=float)
        p.add_argument("--loss-on", dest="loss_on", choices=["affinity", "weight"])

    p = sub.add_parser("train", help="fit the vector tables on the training segments")
    common(p)
    trainer_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("link", help="run the full continual loop and write predictions")
    common(p)
    trainer_flags(p)
    p.add_argument("--k-entities", dest="k_entities", type=int)
    p.add_argument("--k-mentions", dest="k_mentions", type=int)
    p.add_argument("--link-threshold", dest="link_threshold", type=float)
    p.add_argument("--rank-depth", dest="rank_depth", type=int)
    p.add_argument("--no-train", dest="no_train", action="store_true", help="skip the training phase")
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("eval", help="compute metrics from prediction files")
    common(p)
    p.add_argument("--predictions", help="link predictions JSONL")
    p.add_argument("--qa-predictions", dest="qa_predictions", help="qa predictions JSONL")
    p.add_argument("--qa", help="qa pairs JSONL (needed with --qa-predictions)")
    p.add_argument("--recall-ns", dest="recall_ns", help="comma-separated recall cutoffs")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("qa", help="run a prompt variant over QA pairs")
    common(p)
    p.add_argument("--qa", help="qa pairs JSONL")
    p.add_argument("--corpus", help="corpus JSONL for retrieval context")
    p.add_argument("--kb", help="knowledge base for entity display names")
    p.add_argument("--resolutions", help="mention resolution JSONL for ER variants")
    p.add_argument("--variant", choices=list(VARIANTS))
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--client", choices=["gold-echo", "http"])
    p.set_defaults(func=cmd_qa)

    p = sub.add_parser("report", help="re-emit a JSON report in another format")
    common(p)
    p.add_argument("--report", help="report.json produced by eval")
    p.add_argument("--format", choices=["json", "csv"], default="csv")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth-bench", help="run the synthetic drift benchmark")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=int, help="number of consecutive seeds to average")
    p.add_argument("--entities", type=int)
    p.add_argument("--segments", type=int)
    p.add_argument("--mentions", type=int)
    p.set_defaults(func=cmd_synth_bench)

    return parser


def dispatch(argv: Sequence[str]) -> int:
    """Parse arguments and run one subcommand.

    Returns 0 on success and 1 on any domain error, which is printed as
    one JSON object on stderr; argparse itself exits 2 on usage errors.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ChronolinkError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "OSError", "message": str(exc)}), file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
