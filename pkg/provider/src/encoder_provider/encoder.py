"""Transformer wrapper: loading, marker registration, CLS pooling.

The encoder loads any local checkpoint directory or hub model id that
transformers can resolve (default ``bert-base-cased``), registers the
marker strings as reserved vocabulary entries, and embeds marker
sequences by taking the hidden state at the leading [CLS] position.
Newly added marker embeddings keep the model's default initializer for
fresh rows; whether that happened is exposed for the run manifest.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .errors import ModelError
from .sequences import NAME_MARKER, SPAN_END, SPAN_START

DEFAULT_MODEL = "bert-base-cased"

RESERVED_MARKERS = (NAME_MARKER, SPAN_START, SPAN_END)


class TextEncoder:
    """A pretrained text encoder with the marker tokens registered."""

    def __init__(self, model_id: str = DEFAULT_MODEL) -> None:
        from transformers import AutoModel, AutoTokenizer

        self.model_id = model_id
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_id)
            self.model = AutoModel.from_pretrained(model_id)
        except (OSError, ValueError, KeyError) as exc:
            raise ModelError(f"cannot load encoder model {model_id!r}: {exc}") from None
        # The registration return value counts markers it marked special,
        # not vocabulary growth; only a length change means new rows.
        before = len(self.tokenizer)
        self.tokenizer.add_special_tokens({"additional_special_tokens": list(RESERVED_MARKERS)})
        grown = len(self.tokenizer) - before
        if grown:
            self.model.resize_token_embeddings(len(self.tokenizer))
            self._init_marker_rows(grown)
        self.added_marker_rows = grown
        self.model.eval()

    def _init_marker_rows(self, count: int) -> None:
        # Fresh marker rows draw from the model's default initializer
        # distribution under a pinned seed, so separate processes agree.
        std = float(getattr(self.model.config, "initializer_range", 0.02))
        generator = torch.Generator().manual_seed(0)
        weight = self.model.get_input_embeddings().weight
        with torch.no_grad():
            rows = torch.normal(0.0, std, size=(count, weight.shape[1]), generator=generator)
            weight[-count:] = rows.to(weight.dtype)

    @property
    def dim(self) -> int:
        return int(self.model.config.hidden_size)

    @property
    def max_tokens(self) -> int:
        return int(self.model.config.max_position_embeddings)

    @property
    def marker_init(self) -> str:
        """How marker embeddings came to exist, for the run manifest."""
        return "seeded-default-rows" if self.added_marker_rows else "native-vocab"

    def _batch_inputs(self, texts: Sequence[str], refs: Sequence[str]):
        # Sequences arrive pre-structured; the tokenizer must not add its own wrapping.
        enc = self.tokenizer(
            list(texts), add_special_tokens=False, padding=True, return_tensors="pt"
        )
        lengths = enc["attention_mask"].sum(dim=1)
        for i, length in enumerate(lengths.tolist()):
            if length > self.max_tokens:
                raise ModelError(
                    f"{refs[i]!r}: sequence of {length} model tokens exceeds the "
                    f"encoder maximum of {self.max_tokens}"
                )
            if length == 0:
                raise ModelError(f"{refs[i]!r}: sequence tokenized to nothing")
        return enc

    def encode(
        self,
        texts: Sequence[str],
        refs: Sequence[str] | None = None,
        batch_size: int = 32,
    ) -> np.ndarray:
        """Embed texts to a (n, dim) float32 array, inference mode."""
        if batch_size < 1:
            raise ModelError(f"batch size must be at least 1, got {batch_size}")
        if refs is None:
            refs = [f"item {i}" for i in range(len(texts))]
        out: list[np.ndarray] = []
        self.model.eval()
        with torch.no_grad():
            for lo in range(0, len(texts), batch_size):
                chunk = texts[lo : lo + batch_size]
                enc = self._batch_inputs(chunk, refs[lo : lo + batch_size])
                hidden = self.model(**enc).last_hidden_state
                out.append(hidden[:, 0, :].to(torch.float32).numpy())
        if not out:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.concatenate(out, axis=0)

    def encode_train(self, texts: Sequence[str], refs: Sequence[str]) -> torch.Tensor:
        """Embed one batch with gradients enabled, for fine-tuning."""
        enc = self._batch_inputs(texts, refs)
        hidden = self.model(**enc).last_hidden_state
        return hidden[:, 0, :]

    def save(self, directory: str | Path) -> None:
        """Write a checkpoint the constructor can load back."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.model.save_pretrained(directory)
        self.tokenizer.save_pretrained(directory)
