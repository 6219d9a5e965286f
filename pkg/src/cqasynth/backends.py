"""Contracts for the three model roles plus deterministic mock implementations.

The pipeline talks to a span extractor, a sequence generator, and an
answerability scorer only through the protocols below. Real-model adapters
are described by :class:`AdapterConfig` records and are out of scope here;
the mocks are pure functions of their inputs, so mock-backed runs are
reproducible byte for byte.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence, runtime_checkable

from .corpus import AnswerSpan, Conversation, Passage
from .tokens import FLOW_CLOSED, FLOW_OPEN, HL_CLOSE, HL_OPEN, SEP


class BackendError(RuntimeError):
    """A model backend failed; carries the original cause."""


class ContractViolation(BackendError):
    """A backend returned output that breaks its contract."""


@runtime_checkable
class SpanExtractorBackend(Protocol):
    supports_concurrent_calls: bool

    def extract_span(self, passage: Passage, history: Conversation) -> AnswerSpan | None:
        ...


@runtime_checkable
class Seq2SeqBackend(Protocol):
    supports_concurrent_calls: bool
    beam_size: int

    def generate(self, encoded_input: str) -> str:
        ...


@runtime_checkable
class AnswerabilityScorer(Protocol):
    supports_concurrent_calls: bool

    def probability(self, history_text: str, question: str, sentence: str) -> float:
        ...


# ---------------------------------------------------------------------------
# boundary operations: contract violations are caught here, never propagated
# into pipeline state


def extract_span(
    backend: SpanExtractorBackend, passage: Passage, history: Conversation
) -> AnswerSpan | None:
    """Query the extractor and validate the returned span against the passage."""
    try:
        span = backend.extract_span(passage, history)
    except Exception as exc:
        raise BackendError(f"span extractor failed: {exc}") from exc
    if span is None:
        return None
    if not isinstance(span, AnswerSpan):
        raise ContractViolation(f"extractor returned {type(span).__name__}, not a span")
    if not (0 <= span.start_char < span.end_char <= len(passage.text)):
        raise ContractViolation(
            f"span [{span.start_char}, {span.end_char}) outside passage bounds"
        )
    if passage.text[span.start_char:span.end_char] != span.text:
        raise ContractViolation("span text does not match the passage slice")
    return span


def generate_text(backend: Seq2SeqBackend, encoded_input: str) -> str:
    """Run the generator; an empty output violates the contract."""
    try:
        output = backend.generate(encoded_input)
    except Exception as exc:
        raise BackendError(f"generator failed: {exc}") from exc
    if not isinstance(output, str) or not output.strip():
        raise ContractViolation("generator returned empty output")
    return output


def score(
    scorer: AnswerabilityScorer, history_text: str, question: str, sentence: str
) -> float:
    """Run the scorer; values outside [0, 1] violate the contract."""
    if not question or not sentence:
        raise ValueError("question and sentence must be non-empty")
    try:
        value = scorer.probability(history_text, question, sentence)
    except Exception as exc:
        raise BackendError(f"scorer failed: {exc}") from exc
    if not isinstance(value, (int, float)) or not 0.0 <= value <= 1.0:
        raise ContractViolation(f"probability {value!r} outside [0, 1]")
    return float(value)


# ---------------------------------------------------------------------------
# mock span extractors


@dataclass(frozen=True)
class FixedSpanExtractor:
    """Always proposes the same character range."""

    start_char: int
    end_char: int
    supports_concurrent_calls: bool = True

    def extract_span(self, passage: Passage, history: Conversation) -> AnswerSpan | None:
        return AnswerSpan(
            self.start_char, self.end_char, passage.text[self.start_char:self.end_char]
        )


class ScriptedSpanExtractor:
    """Replays a fixed sequence of (start, end) spans, one per attempted turn.

    The position in the script is derived from the conversation itself
    (kept + discarded counts), so the mock stays a pure function of its
    inputs. Returns None once the script is exhausted.
    """

    supports_concurrent_calls = True

    def __init__(self, spans: Sequence[tuple[int, int]]):
        self._spans = [tuple(span) for span in spans]

    def extract_span(self, passage: Passage, history: Conversation) -> AnswerSpan | None:
        position = len(history.pairs) + len(history.discarded)
        if position >= len(self._spans):
            return None
        start, end = self._spans[position]
        return AnswerSpan(start, end, passage.text[start:end])


class NoSpanExtractor:
    """Immediately signals that no span is extractable."""

    supports_concurrent_calls = True

    def extract_span(self, passage: Passage, history: Conversation) -> AnswerSpan | None:
        return None


_CAPITALIZED_RUN = re.compile(r"\b[A-Z][A-Za-z]*(?: [A-Z][A-Za-z]*)*")


class RuleSpanExtractor:
    """Proposes capitalized word runs in passage order, never repeating.

    Spans already attempted in this conversation (kept, unknownized, or
    discarded) are skipped, so the extractor advances through the passage
    as the conversation grows. Pure given (passage, history).
    """

    supports_concurrent_calls = True

    def extract_span(self, passage: Passage, history: Conversation) -> AnswerSpan | None:
        used = {
            (p.source_span.start_char, p.source_span.end_char)
            for p in (*history.pairs, *history.discarded)
            if p.source_span is not None
        }
        for match in _CAPITALIZED_RUN.finditer(passage.text):
            if match.span() not in used:
                return AnswerSpan(match.start(), match.end(), match.group())
        return None


# ---------------------------------------------------------------------------
# mock generator


@dataclass(frozen=True)
class TemplateSeq2Seq:
    """Deterministic generator stub.

    Open flow: emits the question template and echoes the highlighted span
    as the revised answer. Closed flow: emits the closed template and the
    requested label. Templates may reference ``{span}`` / ``{label}``.
    """

    open_question: str = "what city?"
    closed_question: str = "is it true?"
    beam_size: int = 4
    supports_concurrent_calls: bool = True

    def generate(self, encoded_input: str) -> str:
        if FLOW_CLOSED in encoded_input:
            label = encoded_input.rsplit(FLOW_CLOSED, 1)[1].strip()
            question = self.closed_question.format(label=label, span=_highlighted(encoded_input))
            return f"{question} {SEP} {label}"
        if FLOW_OPEN in encoded_input:
            span = _highlighted(encoded_input)
            question = self.open_question.format(span=span)
            return f"{question} {SEP} {span}"
        raise ValueError("encoded input carries no flow tag")


def _highlighted(encoded_input: str) -> str:
    if HL_OPEN not in encoded_input:
        raise ValueError("no highlighted span in encoded input")
    after = encoded_input.split(HL_OPEN, 1)[1]
    return after.split(HL_CLOSE, 1)[0].strip()


# ---------------------------------------------------------------------------
# mock scorers


class MockScorer:
    """Table-driven scorer keyed by (question, sentence index).

    Misses fall back to ``default``, making the scorer a total function.
    Sentence indices are resolved through a text-to-index mapping, normally
    built from a passage via :meth:`for_passage`.
    """

    supports_concurrent_calls = True

    def __init__(
        self,
        table: Mapping[tuple[str, int], float],
        default: float = 0.0,
        sentence_indices: Mapping[str, int] | None = None,
    ):
        for key, prob in table.items():
            if not 0.0 <= prob <= 1.0:
                raise ValueError(f"table probability {prob} for {key!r} outside [0, 1]")
        if not 0.0 <= default <= 1.0:
            raise ValueError(f"default probability {default} outside [0, 1]")
        self._table = dict(table)
        self._default = default
        self._sentence_indices = dict(sentence_indices or {})

    @classmethod
    def for_passage(
        cls,
        passage: Passage,
        table: Mapping[tuple[str, int], float],
        default: float = 0.0,
    ) -> "MockScorer":
        return cls(table, default, {s.text: s.index for s in passage.sentences})

    def probability(self, history_text: str, question: str, sentence: str) -> float:
        index = self._sentence_indices.get(sentence)
        return self._table.get((question, index), self._default)


@dataclass(frozen=True)
class ConstantScorer:
    value: float
    supports_concurrent_calls: bool = True

    def probability(self, history_text: str, question: str, sentence: str) -> float:
        return self.value


@dataclass(frozen=True)
class HashScorer:
    """Seeded pseudo-random scorer: a pure hash of its inputs mapped to [0, 1)."""

    seed: int = 0
    supports_concurrent_calls: bool = True

    def probability(self, history_text: str, question: str, sentence: str) -> float:
        payload = f"{self.seed}|{history_text}|{question}|{sentence}".encode("utf-8")
        digest = hashlib.sha256(payload).digest()
        return int.from_bytes(digest[:8], "big") / 2.0**64


# ---------------------------------------------------------------------------
# adapter configuration (recorded, not executed)


@dataclass(frozen=True)
class AdapterConfig:
    """Training/decoding settings for a real-model adapter, recorded only."""

    role: str
    pretrained_model: str
    epoch: int | None
    batch_size: int
    learning_rate: float
    warmup: float
    stage: str | None = None


DEFAULT_ADAPTER_CONFIGS = (
    AdapterConfig("span_extractor", "bert-large-cased", 2, 16, 3e-5, 0.1),
    AdapterConfig("generator", "t5-large", 3, 4, 3e-5, 0.1),
    AdapterConfig("answerability_scorer", "albert-large", 10, 16, 8e-6, 0.05, stage="pretraining"),
    AdapterConfig("answerability_scorer", "albert-large", 2, 4, 1e-6, 0.0, stage="finetuning"),
    AdapterConfig("reader", "t5-large", None, 16, 3e-5, 0.1),
)


def load_adapter_config(path: str | Path) -> AdapterConfig:
    """Read a key-value adapter configuration file.

    Recognized keys: role, pretrained_model, epoch, batch_size,
    learning_rate, warmup, stage. An epoch of "-" means unspecified.
    """
    fields: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}: line {lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        fields[key.strip()] = value.strip()
    try:
        epoch_raw = fields.pop("epoch", "-")
        return AdapterConfig(
            role=fields.pop("role"),
            pretrained_model=fields.pop("pretrained_model"),
            epoch=None if epoch_raw in ("-", "") else int(epoch_raw),
            batch_size=int(fields.pop("batch_size")),
            learning_rate=float(fields.pop("learning_rate")),
            warmup=float(fields.pop("warmup")),
            stage=fields.pop("stage", None),
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing adapter field {exc.args[0]!r}") from exc
