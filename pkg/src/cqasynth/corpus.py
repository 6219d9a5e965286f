"""Data model for passages, conversations, and synthetic CQA datasets.

Owns the record types used across the package, the CoQA-format reader, and
the line-delimited JSON dataset format (one conversation per line) produced
by the synthesis pipeline. All types are immutable after construction and
all operations are pure; writes to the same path must be serialized by the
caller.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

logger = logging.getLogger(__name__)

DOMAINS = ("children", "literature", "news", "exam", "wikipedia", "other")
ANSWER_TYPES = ("open", "yes", "no", "unknown")
PAIR_STATUSES = ("kept", "unknownized", "discarded")
VERDICT_OUTCOMES = ("keep", "discard", "unknown")
UNKNOWN_ANSWER = "unknown"

# CoQA "source" values for the five domains with official train/dev splits.
_SOURCE_TO_DOMAIN = {
    "mctest": "children",
    "gutenberg": "literature",
    "cnn": "news",
    "race": "exam",
    "wikipedia": "wikipedia",
}

_STATUS_TO_OUTCOME = {"kept": "keep", "unknownized": "unknown", "discarded": "discard"}


class DatasetFormatError(ValueError):
    """An input file does not match the expected schema."""


# ---------------------------------------------------------------------------
# sentence segmentation

_TERMINALS = ".!?"
_CLOSERS = "\"')’”]"

# Words whose trailing period does not end a sentence. Bare initials such as
# "A." are intentionally absent: a single capital followed by a period is
# treated as a terminator.
_ABBREVIATIONS = frozenset({
    "mr", "mrs", "ms", "dr", "prof", "rev", "hon", "st", "mt", "sr", "jr",
    "capt", "col", "gen", "lt", "sgt", "maj", "gov", "sen", "rep",
    "vs", "etc", "inc", "ltd", "co", "corp", "dept", "est", "approx",
    "fig", "e.g", "i.e", "a.m", "p.m", "u.s", "u.k", "al",
    "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept",
    "oct", "nov", "dec",
})


def _word_before(text: str, pos: int) -> str:
    """Letters-and-periods run immediately left of position ``pos``."""
    k = pos
    while k > 0 and (text[k - 1].isalpha() or text[k - 1] == "."):
        k -= 1
    return text[k:pos].strip(".").lower()


def split_sentences(text: str) -> list[SentenceSpan]:
    """Rule-based sentence segmentation on terminal punctuation.

    A boundary is a run of ``.!?`` (plus trailing closing quotes/brackets)
    followed by whitespace or end of text, unless the word before a lone
    period is a known abbreviation. Deterministic for a fixed input. The
    segmenter is pluggable: pass an alternative via ``Passage.from_text``.
    """
    if not text or not text.strip():
        raise ValueError("cannot split empty text into sentences")
    cuts: list[int] = []
    i, n = 0, len(text)
    while i < n:
        if text[i] not in _TERMINALS:
            i += 1
            continue
        j = i
        while j < n and text[j] in _TERMINALS:
            j += 1
        k = j
        while k < n and text[k] in _CLOSERS:
            k += 1
        followed_ok = k >= n or text[k].isspace()
        abbreviated = (
            text[i] == "." and j - i == 1 and _word_before(text, i) in _ABBREVIATIONS
        )
        if followed_ok and not abbreviated:
            cuts.append(k)
        i = k if k > i else i + 1
    if not cuts or cuts[-1] < n:
        cuts.append(n)

    spans: list[SentenceSpan] = []
    prev = 0
    for cut in cuts:
        chunk = text[prev:cut]
        if chunk.strip():
            start = prev + (len(chunk) - len(chunk.lstrip()))
            end = prev + len(chunk.rstrip())
            spans.append(SentenceSpan(len(spans), start, end, text[start:end]))
        prev = cut
    return spans


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class SentenceSpan:
    """One sentence of a passage, addressed by character offsets."""

    index: int
    start_char: int
    end_char: int
    text: str

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError(f"sentence index must be >= 0, got {self.index}")
        if self.start_char >= self.end_char:
            raise ValueError(
                f"sentence span must be non-empty: [{self.start_char}, {self.end_char})"
            )


@dataclass(frozen=True)
class AnswerSpan:
    """A candidate answer phrase addressed by character offsets in a passage."""

    start_char: int
    end_char: int
    text: str

    def __post_init__(self) -> None:
        if self.start_char >= self.end_char:
            raise ValueError(
                f"answer span must be non-empty: [{self.start_char}, {self.end_char})"
            )
        if len(self.text) != self.end_char - self.start_char:
            raise ValueError("answer span text length does not match its offsets")


@dataclass(frozen=True)
class Passage:
    """A source document with sentence segmentation and a domain tag."""

    id: str
    domain: str
    text: str
    sentences: tuple[SentenceSpan, ...]

    def __post_init__(self) -> None:
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")
        if not self.text:
            raise ValueError("passage text must be non-empty")
        prev_end = 0
        for pos, span in enumerate(self.sentences):
            if span.index != pos:
                raise ValueError(f"sentence indices must be 0..n-1, got {span.index} at {pos}")
            if span.start_char < prev_end:
                raise ValueError(f"sentence {pos} overlaps or precedes sentence {pos - 1}")
            if span.end_char > len(self.text):
                raise ValueError(f"sentence {pos} extends past the passage")
            if self.text[span.start_char:span.end_char] != span.text:
                raise ValueError(f"sentence {pos} text does not match the passage slice")
            if self.text[prev_end:span.start_char].strip():
                raise ValueError(f"uncovered non-whitespace before sentence {pos}")
            prev_end = span.end_char
        if self.text[prev_end:].strip():
            raise ValueError("uncovered non-whitespace after the last sentence")

    @classmethod
    def from_text(
        cls,
        id: str,
        domain: str,
        text: str,
        splitter: Callable[[str], list[SentenceSpan]] = split_sentences,
    ) -> "Passage":
        return cls(id=id, domain=domain, text=text, sentences=tuple(splitter(text)))

    def sentence_at(self, char_pos: int) -> SentenceSpan:
        """The sentence whose character range contains ``char_pos``."""
        for span in self.sentences:
            if span.start_char <= char_pos < span.end_char:
                return span
        raise ValueError(
            f"position {char_pos} lies outside all sentences of passage {self.id!r}"
        )


@dataclass(frozen=True)
class ClassifierVerdict:
    """Outcome of two-level answerability classification for one pair.

    ``passage_probs`` holds (sentence_index, probability) for every sentence
    scored at the passage level, ordered by sentence index; it is empty when
    the passage level never ran.
    """

    outcome: str
    context_prob: float
    passage_probs: tuple[tuple[int, float], ...]
    context_sentence_index: int

    def __post_init__(self) -> None:
        if self.outcome not in VERDICT_OUTCOMES:
            raise ValueError(f"unknown verdict outcome {self.outcome!r}")
        if not 0.0 <= self.context_prob <= 1.0:
            raise ValueError(f"context probability {self.context_prob} outside [0, 1]")
        for idx, prob in self.passage_probs:
            if not 0.0 <= prob <= 1.0:
                raise ValueError(f"probability {prob} for sentence {idx} outside [0, 1]")
        if self.context_sentence_index < 0:
            raise ValueError("context sentence index must be >= 0")


@dataclass(frozen=True)
class QAPair:
    """One synthesized question/answer turn.

    ``status`` is None while the pair is pending classification; afterwards
    it is one of kept / unknownized / discarded.
    """

    turn: int
    question: str
    answer: str
    answer_type: str
    source_span: AnswerSpan | None = None
    status: str | None = None
    verdict: ClassifierVerdict | None = None

    def __post_init__(self) -> None:
        if self.turn < 1:
            raise ValueError(f"turn must be >= 1, got {self.turn}")
        if self.answer_type not in ANSWER_TYPES:
            raise ValueError(f"unknown answer type {self.answer_type!r}")
        if self.status is not None and self.status not in PAIR_STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.answer_type in ("yes", "no") and self.answer != self.answer_type:
            raise ValueError(
                f"closed-ended answer must be the literal {self.answer_type!r}, "
                f"got {self.answer!r}"
            )
        if self.answer_type == "unknown":
            if self.answer != UNKNOWN_ANSWER:
                raise ValueError("unknown-type pairs must carry the literal 'unknown'")
            if self.status != "unknownized":
                raise ValueError("unknown-type pairs must have status 'unknownized'")
        if self.status == "unknownized" and self.answer_type != "unknown":
            raise ValueError("unknownized pairs must have answer type 'unknown'")


@dataclass(frozen=True)
class Conversation:
    """Ordered multi-turn container; discarded pairs live in a separate audit list."""

    passage_id: str
    domain: str = "other"
    pairs: tuple[QAPair, ...] = ()
    discarded: tuple[QAPair, ...] = ()

    def __post_init__(self) -> None:
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")
        prev_turn = 0
        for pair in self.pairs:
            if pair.status not in ("kept", "unknownized"):
                raise ValueError(
                    f"pair at turn {pair.turn} has status {pair.status!r}; only kept "
                    "and unknownized pairs may appear in a conversation"
                )
            if pair.turn <= prev_turn:
                raise ValueError("turn numbers must be strictly increasing")
            prev_turn = pair.turn
        for pair in self.discarded:
            if pair.status != "discarded":
                raise ValueError("audit list may only contain discarded pairs")


@dataclass(frozen=True)
class GoldTurn:
    """One reference turn from a human-annotated conversation."""

    turn: int
    question: str
    answer: str
    span_start: int = -1
    span_end: int = -1
    span_text: str = ""
    additional_answers: tuple[str, ...] = ()

    @property
    def candidates(self) -> tuple[str, ...]:
        """All reference answers for this turn, main answer first."""
        return (self.answer, *self.additional_answers)

    @property
    def unanswerable(self) -> bool:
        return self.answer.strip().lower() == UNKNOWN_ANSWER


@dataclass(frozen=True)
class GoldConversation:
    passage_id: str
    turns: tuple[GoldTurn, ...]


@dataclass(frozen=True)
class DatasetStats:
    """Per-type counts and percentages over kept + unknownized pairs."""

    counts: dict[str, int]
    percentages: dict[str, float]
    answerable_total: int
    unanswerable_total: int
    total: int


# ---------------------------------------------------------------------------
# CoQA reading


def load_coqa(path: str | Path) -> list[tuple[Passage, list[GoldConversation]]]:
    """Read a CoQA-format JSON file.

    Returns one passage per story together with its gold conversation, which
    carries all reference answers including the additional-answer sets.
    Unknown ``source`` values map to the ``other`` domain with a warning.
    """
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(payload, dict) or not isinstance(payload.get("data"), list):
        raise DatasetFormatError(f"{path}: missing top-level 'data' array")

    out: list[tuple[Passage, list[GoldConversation]]] = []
    for position, item in enumerate(payload["data"]):
        rid = item.get("id") if isinstance(item, dict) else None
        rid = rid or f"#{position}"
        try:
            out.append(_parse_coqa_record(item))
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(f"{path}: record {rid}: {exc}") from exc
    return out


def _parse_coqa_record(item: dict) -> tuple[Passage, list[GoldConversation]]:
    rid = item["id"]
    source = item["source"]
    domain = _SOURCE_TO_DOMAIN.get(source)
    if domain is None:
        logger.warning("unknown CoQA source %r for record %s; mapping to 'other'", source, rid)
        domain = "other"
    passage = Passage.from_text(rid, domain, item["story"])

    questions = {q["turn_id"]: q["input_text"] for q in item["questions"]}
    answers = {a["turn_id"]: a for a in item["answers"]}
    extra_by_turn: dict[int, list[str]] = {}
    for key in sorted(item.get("additional_answers") or {}):
        for ans in (item["additional_answers"][key]) or []:
            extra_by_turn.setdefault(ans["turn_id"], []).append(ans["input_text"])

    turns = []
    for turn_id in sorted(questions):
        if turn_id not in answers:
            raise ValueError(f"turn {turn_id} has a question but no answer")
        ans = answers[turn_id]
        turns.append(
            GoldTurn(
                turn=turn_id,
                question=questions[turn_id],
                answer=ans["input_text"],
                span_start=int(ans.get("span_start", -1)),
                span_end=int(ans.get("span_end", -1)),
                span_text=ans.get("span_text") or "",
                additional_answers=tuple(extra_by_turn.get(turn_id, ())),
            )
        )
    return passage, [GoldConversation(rid, tuple(turns))]


def sniff_json_format(path: str | Path) -> str:
    """Distinguish a single CoQA-style JSON document ("coqa") from JSONL ("jsonl").

    A file that parses as one JSON object with a top-level "data" key is
    CoQA-format; anything else is treated as line-delimited records.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError:
        return "jsonl"
    return "coqa" if isinstance(payload, dict) and "data" in payload else "jsonl"


def load_passages(path: str | Path) -> list[Passage]:
    """Read passages from a CoQA JSON file or from JSONL {id, domain, text} records."""
    path = Path(path)
    if sniff_json_format(path) == "coqa":
        return [passage for passage, _ in load_coqa(path)]
    passages = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            passages.append(
                Passage.from_text(record["id"], record["domain"], record["text"])
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(f"{path}: line {lineno}: {exc}") from exc
    return passages


def gold_to_conversations(
    loaded: Iterable[tuple[Passage, list[GoldConversation]]],
) -> list[Conversation]:
    """Convert gold conversations to the synthetic-dataset representation.

    Yes/no answers are canonicalized to the bare literals; unanswerable turns
    become unknownized pairs. Useful for sampling human-evaluation packets
    from human-annotated data alongside synthetic data.
    """
    conversations = []
    for passage, golds in loaded:
        for gold in golds:
            pairs = []
            for turn in gold.turns:
                norm = turn.answer.strip().lower().rstrip(".")
                span = None
                if (
                    0 <= turn.span_start < turn.span_end <= len(passage.text)
                    and passage.text[turn.span_start:turn.span_end] == turn.span_text
                ):
                    span = AnswerSpan(turn.span_start, turn.span_end, turn.span_text)
                if norm in ("yes", "no"):
                    pairs.append(
                        QAPair(turn.turn, turn.question, norm, norm,
                               source_span=span, status="kept")
                    )
                elif norm == UNKNOWN_ANSWER:
                    pairs.append(
                        QAPair(turn.turn, turn.question, UNKNOWN_ANSWER, "unknown",
                               source_span=span, status="unknownized")
                    )
                else:
                    pairs.append(
                        QAPair(turn.turn, turn.question, turn.answer, "open",
                               source_span=span, status="kept")
                    )
            conversations.append(
                Conversation(passage.id, passage.domain, tuple(pairs))
            )
    return conversations


# ---------------------------------------------------------------------------
# synthetic dataset format: one JSON object per line


def _span_to_dict(span: AnswerSpan | None) -> dict | None:
    if span is None:
        return None
    return {"start": span.start_char, "end": span.end_char, "text": span.text}


def _verdict_to_probs(verdict: ClassifierVerdict | None) -> dict | None:
    if verdict is None:
        return None
    ordered = sorted(verdict.passage_probs)
    return {
        "context": verdict.context_prob,
        "passage": [prob for _, prob in ordered],
        "context_sentence": verdict.context_sentence_index,
    }


def _pair_to_dict(pair: QAPair) -> dict:
    return {
        "turn": pair.turn,
        "question": pair.question,
        "answer": pair.answer,
        "type": pair.answer_type,
        "status": pair.status,
        "span": _span_to_dict(pair.source_span),
        "probs": _verdict_to_probs(pair.verdict),
    }


def _require(record: dict, field: str, where: str):
    if field not in record:
        raise DatasetFormatError(f"{where}: missing field {field!r}")
    return record[field]


def _probs_to_verdict(probs: dict | None, status: str, where: str) -> ClassifierVerdict | None:
    if probs is None:
        return None
    outcome = _STATUS_TO_OUTCOME.get(status)
    if outcome is None:
        raise DatasetFormatError(f"{where}: probs present on a pair without status")
    context = _require(probs, "context", where)
    passage = _require(probs, "passage", where)
    context_sentence = _require(probs, "context_sentence", where)
    if passage:
        total = len(passage) + 1
        if not 0 <= context_sentence < total:
            raise DatasetFormatError(f"{where}: field 'probs.context_sentence' out of range")
        indices = [i for i in range(total) if i != context_sentence]
        passage_probs = tuple(zip(indices, (float(p) for p in passage)))
    else:
        passage_probs = ()
    try:
        return ClassifierVerdict(outcome, float(context), passage_probs, int(context_sentence))
    except ValueError as exc:
        raise DatasetFormatError(f"{where}: {exc}") from exc


def _pair_from_dict(record: dict, where: str) -> QAPair:
    span_dict = _require(record, "span", where)
    span = None
    if span_dict is not None:
        span = AnswerSpan(
            int(_require(span_dict, "start", where)),
            int(_require(span_dict, "end", where)),
            str(_require(span_dict, "text", where)),
        )
    status = _require(record, "status", where)
    try:
        return QAPair(
            turn=int(_require(record, "turn", where)),
            question=str(_require(record, "question", where)),
            answer=str(_require(record, "answer", where)),
            answer_type=str(_require(record, "type", where)),
            source_span=span,
            status=status,
            verdict=_probs_to_verdict(_require(record, "probs", where), status, where),
        )
    except ValueError as exc:
        raise DatasetFormatError(f"{where}: {exc}") from exc


def write_dataset(dataset: Iterable[Conversation], path: str | Path) -> None:
    """Write conversations as line-delimited JSON, one conversation per line."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for conv in dataset:
            record = {
                "passage_id": conv.passage_id,
                "domain": conv.domain,
                "turns": [_pair_to_dict(p) for p in conv.pairs],
                "discarded": [_pair_to_dict(p) for p in conv.discarded],
            }
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_dataset(path: str | Path) -> list[Conversation]:
    """Read a line-delimited dataset; schema violations name the offending field."""
    path = Path(path)
    conversations = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        where = f"{path}: line {lineno}"
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"{where}: not valid JSON ({exc})") from exc
        try:
            conversations.append(
                Conversation(
                    passage_id=str(_require(record, "passage_id", where)),
                    domain=str(_require(record, "domain", where)),
                    pairs=tuple(
                        _pair_from_dict(p, where) for p in _require(record, "turns", where)
                    ),
                    discarded=tuple(
                        _pair_from_dict(p, where) for p in _require(record, "discarded", where)
                    ),
                )
            )
        except ValueError as exc:
            if isinstance(exc, DatasetFormatError):
                raise
            raise DatasetFormatError(f"{where}: {exc}") from exc
    return conversations


def compute_stats(dataset: Sequence[Conversation]) -> DatasetStats:
    """Count pairs per answer type over kept + unknownized pairs."""
    counts = {t: 0 for t in ANSWER_TYPES}
    for conv in dataset:
        for pair in conv.pairs:
            counts[pair.answer_type] += 1
    total = sum(counts.values())
    percentages = {
        t: (100.0 * counts[t] / total) if total else 0.0 for t in ANSWER_TYPES
    }
    return DatasetStats(
        counts=counts,
        percentages=percentages,
        answerable_total=counts["open"] + counts["yes"] + counts["no"],
        unanswerable_total=counts["unknown"],
        total=total,
    )
