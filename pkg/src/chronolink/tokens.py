"""Marker-delimited token sequences for entities and mentions.

Entities serialize as ``[CLS] name [NAME] description [SEP]`` and
mentions as ``[CLS] left-context [START] surface [END] right-context
[SEP]``.  Sequences are built over whitespace tokens and truncated to a
fixed budget: entity descriptions are cut from the right, and mention
context is cut outward-in, keeping the words nearest the span and giving
any odd leftover slot to the left side.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import EntityRecord, MentionRecord
from .errors import TokenBudgetError

CLS = "[CLS]"
SEP = "[SEP]"
NAME_MARKER = "[NAME]"
SPAN_START = "[START]"
SPAN_END = "[END]"

MARKERS = (CLS, SEP, NAME_MARKER, SPAN_START, SPAN_END)

MIN_BUDGET = 8


@dataclass(frozen=True)
class TokenSequence:
    """A fixed-budget token list plus the budget it was built under."""

    tokens: tuple[str, ...]
    budget: int

    def __post_init__(self) -> None:
        if len(self.tokens) > self.budget:
            raise TokenBudgetError(
                f"sequence of {len(self.tokens)} tokens exceeds its budget of {self.budget}"
            )

    def __len__(self) -> int:
        return len(self.tokens)

    def text(self) -> str:
        return " ".join(self.tokens)


def _content_tokens(text: str) -> list[str]:
    # Marker strings are reserved; drop them if they occur in raw text.
    return [t for t in text.split() if t not in MARKERS]


def _check_budget(budget: int) -> None:
    if budget < MIN_BUDGET:
        raise TokenBudgetError(f"token budget must be at least {MIN_BUDGET}, got {budget}")


def entity_tokens(entity: EntityRecord, budget: int) -> TokenSequence:
    """Build the entity sequence, truncating the description to fit."""
    _check_budget(budget)
    name = _content_tokens(entity.name)
    fixed = 3 + len(name)  # [CLS], [NAME], [SEP] plus the full name
    if fixed > budget:
        raise TokenBudgetError(
            f"entity {entity.entity_id!r}: name of {len(name)} tokens plus markers "
            f"needs {fixed} slots but the budget is {budget}"
        )
    description = _content_tokens(entity.description)[: budget - fixed]
    return TokenSequence(tokens=(CLS, *name, NAME_MARKER, *description, SEP), budget=budget)


def mention_tokens(mention: MentionRecord, budget: int) -> TokenSequence:
    """Build the mention sequence, truncating context symmetrically.

    The span surface is never truncated.  Remaining slots are split
    between the two context sides; the left side receives the extra slot
    when the split is odd, and slack from a short side flows to the
    other side.
    """
    _check_budget(budget)
    surface = _content_tokens(mention.surface)
    fixed = 4 + len(surface)  # [CLS], [START], [END], [SEP] plus the span
    if fixed > budget:
        raise TokenBudgetError(
            f"mention {mention.mention_id!r}: span of {len(surface)} tokens plus markers "
            f"needs {fixed} slots but the budget is {budget}"
        )
    left = _content_tokens(mention.left_context)
    right = _content_tokens(mention.right_context)
    room = budget - fixed
    left_take = min(len(left), room - room // 2)
    right_take = min(len(right), room - left_take)
    left_take = min(len(left), room - right_take)
    left_kept = left[len(left) - left_take :] if left_take else []
    right_kept = right[:right_take]
    return TokenSequence(
        tokens=(CLS, *left_kept, SPAN_START, *surface, SPAN_END, *right_kept, SEP),
        budget=budget,
    )
