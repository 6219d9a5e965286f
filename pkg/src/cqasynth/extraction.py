"""Answer-span stage: encoder input assembly and span validation.

The extractor backend proposes spans; this module serializes conversation
history for the encoder, validates proposals against the passage, and
rejects spans whose exact character range was already used earlier in the
conversation (including discarded attempts, so deterministic extractors
cannot cycle on one phrase).
"""
from __future__ import annotations

from . import backends
from .corpus import AnswerSpan, Conversation, Passage
from .tokens import SEP

__all__ = ["AnswerSpan", "serialize_history", "encode_cae_input", "run_cae"]


def serialize_history(history: Conversation, max_words: int | None = None) -> str:
    """Render kept and unknownized pairs as "question answer", oldest first.

    When ``max_words`` is set and the rendering is longer, whole pairs are
    dropped oldest first; the most recent pair is always retained.
    """
    parts = [f"{pair.question} {pair.answer}" for pair in history.pairs]
    if max_words is not None:
        while len(parts) > 1 and sum(len(part.split()) for part in parts) > max_words:
            parts.pop(0)
    return " ".join(parts)


def encode_cae_input(
    passage: Passage, history: Conversation, max_history_words: int | None = None
) -> str:
    """Serialized history, separator, passage text; history is empty on turn 1."""
    rendered = serialize_history(history, max_history_words)
    prefix = f"{rendered} " if rendered else ""
    return f"{prefix}{SEP} {passage.text}"


def run_cae(
    backend: backends.SpanExtractorBackend,
    passage: Passage,
    history: Conversation,
    max_requeries: int = 1,
) -> AnswerSpan | None:
    """Extract and validate one answer span; None terminates the conversation.

    A span whose (start, end) range matches any previously attempted span in
    this conversation is rejected; the extractor is re-queried up to
    ``max_requeries`` times before giving up.
    """
    used = {
        (pair.source_span.start_char, pair.source_span.end_char)
        for pair in (*history.pairs, *history.discarded)
        if pair.source_span is not None
    }
    for _ in range(1 + max_requeries):
        span = backends.extract_span(backend, passage, history)
        if span is None:
            return None
        if (span.start_char, span.end_char) not in used:
            return span
    return None
