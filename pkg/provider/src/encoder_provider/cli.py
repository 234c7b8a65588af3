"""Command-line entry point for encode and finetune jobs.

Follows the engine CLI's conventions: one TOML config file with full
flag override (flag beats config beats default), a manifest.json in the
output directory carrying the effective config, its hash, the seed, and
library versions, and no timestamps anywhere so reruns are comparable.
The manifest also notes how the marker-token embeddings were
initialized, since a fresh base model gains new rows for them.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import date
from pathlib import Path
from typing import Any, Mapping

import numpy as np

try:
    import tomllib  # Python 3.11+
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from . import __version__
from .errors import ConfigError, ProviderError
from .pipeline import (
    DEFAULT_BATCH,
    DEFAULT_BUDGET,
    DEFAULT_EPOCHS,
    DEFAULT_LR,
    EncodeJob,
    FinetuneJob,
    encode,
    finetune,
)
from .encoder import DEFAULT_MODEL
from .records import Window

_ENCODE_KEYS = ("model", "budget", "batch_size", "segment", "format")
_FINETUNE_KEYS = (
    "model",
    "budget",
    "batch_size",
    "epochs",
    "learning_rate",
    "seed",
    "train_segments",
)
_PATH_KEYS = ("kb", "corpus", "out", "positives", "negatives")


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


def _section(config: Mapping, name: str, known: tuple[str, ...]) -> dict:
    value = config.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"config section [{name}] must be a table")
    unknown = set(value) - set(known)
    if unknown:
        raise ConfigError(f"unknown [{name}] keys: {sorted(unknown)}")
    return dict(value)


def _pick(flag_value: Any, config_value: Any, default: Any) -> Any:
    if flag_value is not None:
        return flag_value
    if config_value is not None:
        return config_value
    return default


def _resolve_path(args, paths: Mapping, key: str, required: bool) -> str | None:
    value = _pick(getattr(args, key, None), paths.get(key), None)
    if value is None:
        if required:
            raise ConfigError(f"missing required path {key!r} (flag --{key} or [paths].{key})")
        return None
    if key != "out" and not Path(value).exists():
        raise ConfigError(f"configured path {key!r} does not exist: {value}")
    return str(value)


def _window(config: Mapping) -> Window:
    section = _section(config, "timeline", ("window_start", "window_end", "months_per_segment"))
    kwargs: dict[str, Any] = {}
    if "window_start" in section:
        kwargs["start"] = date.fromisoformat(str(section["window_start"]))
    if "window_end" in section:
        kwargs["end"] = date.fromisoformat(str(section["window_end"]))
    if "months_per_segment" in section:
        kwargs["months_per_segment"] = int(section["months_per_segment"])
    return Window(**kwargs)


def _canonical(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(payload: Mapping) -> str:
    return hashlib.sha256(_canonical(payload).encode("utf-8")).hexdigest()


def _write_manifest(out: Path, command: str, payload: Mapping, seed: int, notes: Mapping) -> None:
    import torch
    import transformers

    manifest = {
        "command": command,
        "config": payload,
        "config_hash": config_hash(payload),
        "notes": dict(notes),
        "seed": seed,
        "versions": {
            "encoder_provider": __version__,
            "numpy": np.__version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
            "torch": torch.__version__,
            "transformers": transformers.__version__,
        },
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def cmd_encode(args: argparse.Namespace) -> int:
    config = _load_toml(args.config)
    paths = _section(config, "paths", _PATH_KEYS)
    section = _section(config, "encode", _ENCODE_KEYS)
    job = EncodeJob(
        out=_resolve_path(args, paths, "out", required=True),
        kb=_resolve_path(args, paths, "kb", required=False),
        corpus=_resolve_path(args, paths, "corpus", required=False),
        model=_pick(args.model, section.get("model"), DEFAULT_MODEL),
        budget=int(_pick(args.budget, section.get("budget"), DEFAULT_BUDGET)),
        batch_size=int(_pick(args.batch_size, section.get("batch_size"), DEFAULT_BATCH)),
        segment=_pick(args.segment, section.get("segment"), None),
        format=_pick(args.format, section.get("format"), "jsonl"),
        window=_window(config),
    )
    result = encode(job)
    out = Path(job.out)
    payload = {
        "batch_size": job.batch_size,
        "budget": job.budget,
        "corpus": job.corpus,
        "format": job.format,
        "kb": job.kb,
        "model": job.model,
        "segment": job.segment,
        "window": {
            "end": job.window.end.isoformat(),
            "months_per_segment": job.window.months_per_segment,
            "start": job.window.start.isoformat(),
        },
    }
    _write_manifest(out, "encode", payload, seed=0, notes={"marker_init": result.marker_init})
    print(
        json.dumps(
            {
                "dim": result.dim,
                "entities": result.entity_count,
                "mentions": result.mention_count,
                "paths": result.paths,
            },
            sort_keys=True,
        )
    )
    return 0


def cmd_finetune(args: argparse.Namespace) -> int:
    config = _load_toml(args.config)
    paths = _section(config, "paths", _PATH_KEYS)
    section = _section(config, "finetune", _FINETUNE_KEYS)
    train_segments = _pick(args.train_segments, section.get("train_segments"), None)
    if isinstance(train_segments, str):
        train_segments = [s for s in train_segments.split(",") if s]
    job = FinetuneJob(
        out=_resolve_path(args, paths, "out", required=True),
        corpus=_resolve_path(args, paths, "corpus", required=True),
        kb=_resolve_path(args, paths, "kb", required=True),
        positives=_resolve_path(args, paths, "positives", required=True),
        negatives=_resolve_path(args, paths, "negatives", required=True),
        model=_pick(args.model, section.get("model"), DEFAULT_MODEL),
        budget=int(_pick(args.budget, section.get("budget"), DEFAULT_BUDGET)),
        batch_size=int(_pick(args.batch_size, section.get("batch_size"), DEFAULT_BATCH)),
        epochs=int(_pick(args.epochs, section.get("epochs"), DEFAULT_EPOCHS)),
        learning_rate=float(_pick(args.learning_rate, section.get("learning_rate"), DEFAULT_LR)),
        seed=int(_pick(args.seed, section.get("seed"), 0)),
        train_segments=tuple(train_segments) if train_segments is not None else None,
        window=_window(config),
    )
    result = finetune(job)
    out = Path(job.out)
    payload = {
        "batch_size": job.batch_size,
        "budget": job.budget,
        "corpus": job.corpus,
        "epochs": job.epochs,
        "kb": job.kb,
        "learning_rate": job.learning_rate,
        "model": job.model,
        "negatives": job.negatives,
        "positives": job.positives,
        "seed": job.seed,
        "train_segments": list(job.train_segments) if job.train_segments else None,
        "window": {
            "end": job.window.end.isoformat(),
            "months_per_segment": job.window.months_per_segment,
            "start": job.window.start.isoformat(),
        },
    }
    _write_manifest(out, "finetune", payload, seed=job.seed, notes={"marker_init": result.marker_init})
    print(
        json.dumps(
            {
                "checkpoint": result.checkpoint,
                "edges": result.edge_count,
                "holdout_after": result.holdout_after,
                "holdout_before": result.holdout_before,
            },
            sort_keys=True,
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="encoder-provider",
        description="Encode KB entities and corpus mentions with a pretrained transformer",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--kb", help="KB JSONL path")
        p.add_argument("--corpus", help="corpus JSONL path")
        p.add_argument("--out", help="output directory")
        p.add_argument("--model", help="encoder model id or checkpoint directory")
        p.add_argument("--budget", type=int, help="whitespace-token budget per sequence")
        p.add_argument("--batch-size", dest="batch_size", type=int)

    enc = sub.add_parser("encode", help="embed entities and mentions to a vector file")
    common(enc)
    enc.add_argument("--segment", help="only encode mentions of this segment label")
    enc.add_argument("--format", choices=["jsonl", "binary"], help="output vector format")
    enc.set_defaults(func=cmd_encode)

    fit = sub.add_parser("finetune", help="fine-tune the encoder on exported edge files")
    common(fit)
    fit.add_argument("--positives", help="positive edge dump (source, target, weight TSV)")
    fit.add_argument("--negatives", help="negative edge dump (source, target, weight TSV)")
    fit.add_argument("--epochs", type=int)
    fit.add_argument("--learning-rate", dest="learning_rate", type=float)
    fit.add_argument("--seed", type=int)
    fit.add_argument("--train-segments", dest="train_segments", help="comma-separated segment labels")
    fit.set_defaults(func=cmd_finetune)
    return parser


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ProviderError, OSError) as exc:
        envelope = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(envelope, sort_keys=True), file=sys.stderr)
        return 1


def main() -> None:  # pragma: no cover - thin wrapper
    sys.exit(dispatch())
