"""Marker-delimited input sequences for the encoder.

These follow the engine's token patterns exactly: entities serialize as
``[CLS] name [NAME] description [SEP]`` and mentions as ``[CLS] left
[START] surface [END] right [SEP]``.  Budgets count whitespace tokens.
Descriptions truncate from the right; mention context truncates
outward-in with any odd leftover slot going to the left side.  The
engine's test suite machine-checks this module against its own pattern
definitions.
"""

from __future__ import annotations

from .errors import InputError

CLS = "[CLS]"
SEP = "[SEP]"
NAME_MARKER = "[NAME]"
SPAN_START = "[START]"
SPAN_END = "[END]"

MARKERS = (CLS, SEP, NAME_MARKER, SPAN_START, SPAN_END)

MIN_BUDGET = 8


def content_tokens(text: str) -> list[str]:
    # Marker strings are reserved; drop them if they occur in raw text.
    return [t for t in text.split() if t not in MARKERS]


def _check_budget(budget: int) -> None:
    if budget < MIN_BUDGET:
        raise InputError(f"token budget must be at least {MIN_BUDGET}, got {budget}")


def entity_sequence(name: str, description: str, budget: int, *, ref: str = "") -> tuple[str, ...]:
    """Entity tokens under a budget, description cut from the right."""
    _check_budget(budget)
    name_tokens = content_tokens(name)
    fixed = 3 + len(name_tokens)  # [CLS], [NAME], [SEP] plus the full name
    if fixed > budget:
        raise InputError(
            f"entity {ref!r}: name of {len(name_tokens)} tokens plus markers "
            f"needs {fixed} slots but the budget is {budget}"
        )
    description_tokens = content_tokens(description)[: budget - fixed]
    return (CLS, *name_tokens, NAME_MARKER, *description_tokens, SEP)


def mention_sequence(
    surface: str,
    left_context: str,
    right_context: str,
    budget: int,
    *,
    ref: str = "",
) -> tuple[str, ...]:
    """Mention tokens under a budget, context cut outward-in.

    The span surface is never truncated; remaining slots split between
    the context sides with the extra slot on the left, and slack from a
    short side flows to the other.
    """
    _check_budget(budget)
    surface_tokens = content_tokens(surface)
    fixed = 4 + len(surface_tokens)  # [CLS], [START], [END], [SEP] plus the span
    if fixed > budget:
        raise InputError(
            f"mention {ref!r}: span of {len(surface_tokens)} tokens plus markers "
            f"needs {fixed} slots but the budget is {budget}"
        )
    left = content_tokens(left_context)
    right = content_tokens(right_context)
    room = budget - fixed
    left_take = min(len(left), room - room // 2)
    right_take = min(len(right), room - left_take)
    left_take = min(len(left), room - right_take)
    left_kept = left[len(left) - left_take :] if left_take else []
    right_kept = right[:right_take]
    return (CLS, *left_kept, SPAN_START, *surface_tokens, SPAN_END, *right_kept, SEP)
