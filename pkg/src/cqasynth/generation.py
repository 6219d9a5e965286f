"""The two generation flows: answer-type selection, answer-context windows,
encoder inputs for open/closed questions, and output parsing.

Open-ended pairs go through answer revision (the generator returns a revised
answer alongside the question); closed-ended pairs never do, their answer is
forced to the requested yes/no label regardless of what the model emitted.
"""
from __future__ import annotations

import random
import re
from dataclasses import dataclass
from typing import TYPE_CHECKING

from . import backends
from .corpus import AnswerSpan, Conversation, Passage, QAPair
from .extraction import serialize_history
from .tokens import FLOW_CLOSED, FLOW_OPEN, HL_CLOSE, HL_OPEN, SEP

if TYPE_CHECKING:
    from .pipeline import GenerationConfig

OPEN = "open"
CLOSED_LABELS = ("yes", "no")

_WORD = re.compile(r"\S+")


class GenerationParseError(ValueError):
    """Generator output could not be parsed into a question/answer pair."""


@dataclass(frozen=True)
class TypeRatio:
    """Relative weights for open-ended : yes : no question types."""

    open: float
    yes: float
    no: float

    def __post_init__(self) -> None:
        if min(self.open, self.yes, self.no) < 0:
            raise ValueError("type-ratio weights must be non-negative")
        if self.open + self.yes + self.no == 0:
            raise ValueError("type-ratio weights must not all be zero")

    def normalized(self) -> tuple[float, float, float]:
        total = self.open + self.yes + self.no
        return (self.open / total, self.yes / total, self.no / total)

    @classmethod
    def parse(cls, text: str) -> "TypeRatio":
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"expected 'open:yes:no', got {text!r}")
        return cls(*(float(p) for p in parts))

    def __str__(self) -> str:
        def fmt(w: float) -> str:
            return str(int(w)) if float(w).is_integer() else str(w)

        return f"{fmt(self.open)}:{fmt(self.yes)}:{fmt(self.no)}"


DEFAULT_TYPE_RATIO = TypeRatio(8, 1, 1)


@dataclass(frozen=True)
class AnswerContext:
    """The passage chunk fed to the generator, with the span located inside it."""

    text: str
    span_offset_in_context: int
    span_text: str

    def __post_init__(self) -> None:
        offset = self.span_offset_in_context
        if self.text[offset:offset + len(self.span_text)] != self.span_text:
            raise ValueError("span text does not occur at the recorded context offset")


def type_for_draw(u: float, ratio: TypeRatio) -> str:
    """Map a uniform draw u in [0, 1) to a type via cumulative bands open, yes, no."""
    p_open, p_yes, _ = ratio.normalized()
    if u < p_open:
        return "open"
    if u < p_open + p_yes:
        return "yes"
    return "no"


def select_answer_type(rng: random.Random, ratio: TypeRatio) -> str:
    """Draw the answer type for the next turn according to the preset ratio."""
    return type_for_draw(rng.random(), ratio)


def build_answer_context(
    passage: Passage,
    span: AnswerSpan,
    max_words_after: int = 32,
    max_words_before: int | None = None,
) -> AnswerContext:
    """The passage chunk around the span fed to the generator.

    By default the context is everything before the span plus at most
    ``max_words_after`` whitespace-delimited words after it; nothing in
    front of the span is ever truncated. Passing ``max_words_before``
    switches to a symmetric window bounded on both sides.
    """
    if max_words_after < 0:
        raise ValueError("max_words_after must be >= 0")
    if max_words_before is not None and max_words_before < 0:
        raise ValueError("max_words_before must be >= 0 when given")
    end = span.end_char
    consumed = 0
    for match in _WORD.finditer(passage.text, span.end_char):
        if consumed == max_words_after:
            break
        end = match.end()
        consumed += 1
    else:
        # fewer than max_words_after words remain: the context is the whole passage
        end = len(passage.text)
    if max_words_after == 0:
        end = span.end_char
    start = 0
    if max_words_before is not None:
        preceding = list(_WORD.finditer(passage.text, 0, span.start_char))
        if max_words_before == 0:
            start = span.start_char
        elif len(preceding) > max_words_before:
            start = preceding[-max_words_before].start()
    return AnswerContext(passage.text[start:end], span.start_char - start, span.text)


def _mark_span(context: AnswerContext) -> str:
    offset = context.span_offset_in_context
    return (
        context.text[:offset]
        + f"{HL_OPEN} {context.span_text} {HL_CLOSE}"
        + context.text[offset + len(context.span_text):]
    )


def encode_open_input(
    context: AnswerContext,
    history: Conversation,
    span: AnswerSpan,
    max_history_words: int | None = None,
) -> str:
    """Serialized history, context with the span highlighted, open-flow tag."""
    offset = context.span_offset_in_context
    if context.text[offset:offset + len(span.text)] != span.text:
        raise GenerationParseError("span not found in context at the recorded offset")
    rendered = serialize_history(history, max_history_words)
    prefix = f"{rendered} {SEP} " if rendered else ""
    return f"{prefix}{_mark_span(context)} {FLOW_OPEN}"


def encode_closed_input(
    context: AnswerContext,
    history: Conversation,
    label: str,
    max_history_words: int | None = None,
) -> str:
    """Serialized history, context with the span highlighted, closed tag, label.

    The span stays demarcated: the closed question is grounded on the
    extracted phrase even though its answer is the label.
    """
    if label not in CLOSED_LABELS:
        raise ValueError(f"closed label must be yes or no, got {label!r}")
    rendered = serialize_history(history, max_history_words)
    prefix = f"{rendered} {SEP} " if rendered else ""
    return f"{prefix}{_mark_span(context)} {FLOW_CLOSED} {label}"


def parse_generation_output(
    raw: str, flow: str, label: str | None = None
) -> tuple[str, str]:
    """Split generator output into (question, answer).

    Open flow: the output must contain the separator; the part after it is
    the revised answer. Closed flow: the question is everything before the
    separator (or the whole output), and the answer is forced to ``label``
    no matter what the model produced.
    """
    if not raw or not raw.strip():
        raise GenerationParseError("empty generator output")
    if flow == OPEN:
        if SEP not in raw:
            raise GenerationParseError("open-flow output carries no separator")
        question, _, answer = raw.partition(SEP)
        question, answer = question.strip(), answer.strip()
        if not answer:
            raise GenerationParseError("open-flow output has an empty revised answer")
        if not question:
            raise GenerationParseError("open-flow output has an empty question")
        return question, answer
    if label not in CLOSED_LABELS:
        raise ValueError(f"closed flow requires a yes/no label, got {label!r}")
    question = raw.partition(SEP)[0].strip()
    if not question:
        raise GenerationParseError("closed-flow output has an empty question")
    return question, label


def generate_qa(
    seq2seq: backends.Seq2SeqBackend,
    passage: Passage,
    span: AnswerSpan,
    history: Conversation,
    answer_type: str,
    config: "GenerationConfig",
) -> QAPair:
    """Run one generation flow and return the candidate pair (status pending)."""
    context = build_answer_context(
        passage, span, config.max_words_after, config.max_words_before
    )
    if answer_type == "open":
        encoded = encode_open_input(context, history, span, config.history_length_budget)
        raw = backends.generate_text(seq2seq, encoded)
        question, answer = parse_generation_output(raw, OPEN)
    elif answer_type in CLOSED_LABELS:
        encoded = encode_closed_input(context, history, answer_type, config.history_length_budget)
        raw = backends.generate_text(seq2seq, encoded)
        question, answer = parse_generation_output(raw, "closed", answer_type)
    else:
        raise ValueError(f"unknown answer type {answer_type!r}")
    return QAPair(
        turn=len(history.pairs) + 1,
        question=question,
        answer=answer,
        answer_type=answer_type,
        source_span=span,
    )
