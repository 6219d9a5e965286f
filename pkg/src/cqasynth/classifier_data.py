"""Training-data builders for the answerability classifier, plus its loss.

Two sources feed the classifier: single-turn entailment records (history is
always empty there) and conversational QA gold data. Class imbalance in the
latter is countered two ways: every unanswerable gold question is paired
with every sentence of its passage as a negative sample, and training
minimizes a focal loss instead of plain cross-entropy.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .corpus import GoldConversation, Passage, SentenceSpan
from .tokens import QUESTION_TOKEN, SEGMENT_SEP

logger = logging.getLogger(__name__)

LABELS = ("answerable", "not_answerable")
ORIGINS = ("qnli", "coqa_positive", "coqa_negative")

#: Lower clamp applied to the true-class probability so log(0) cannot occur;
#: the resulting loss for p_t = 0 is about 27.6 per example.
EPSILON = 1e-12

_ENTAILMENT_LABELS = {"entailment": "answerable", "not_entailment": "not_answerable"}


@dataclass(frozen=True)
class ClassifierExample:
    """One (history, question, sentence) training record with a binary label."""

    history_text: str
    question: str
    sentence: str
    label: str
    origin: str

    def __post_init__(self) -> None:
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown origin {self.origin!r}")
        if self.origin == "qnli" and self.history_text:
            raise ValueError("pre-training examples must have an empty history")
        if self.origin == "coqa_negative" and self.label != "not_answerable":
            raise ValueError("negative samples must be labeled not_answerable")


def encode_classifier_input(example: ClassifierExample) -> str:
    """History, question token, question, segment separator, sentence."""
    if not example.question or not example.sentence:
        raise ValueError("question and sentence must be non-empty")
    prefix = f"{example.history_text} " if example.history_text else ""
    return (
        f"{prefix}{QUESTION_TOKEN} {example.question} {SEGMENT_SEP} {example.sentence}"
    )


def build_qnli_examples(
    records: Iterable[tuple[str, str, str]],
) -> list[ClassifierExample]:
    """One pre-training example per (question, sentence, label) record.

    Entailment means the sentence answers the question. Malformed records
    are skipped and the skip count reported via logging.
    """
    examples = []
    skipped = 0
    for record in records:
        try:
            question, sentence, label = record
            mapped = _ENTAILMENT_LABELS[label.strip()]
            if not question or not sentence:
                raise ValueError("empty question or sentence")
        except (KeyError, TypeError, ValueError, AttributeError):
            skipped += 1
            continue
        examples.append(ClassifierExample("", question, sentence, mapped, "qnli"))
    if skipped:
        logger.warning("skipped %d malformed QNLI records", skipped)
    return examples


def read_qnli_tsv(path: str | Path) -> list[tuple[str, str, str]]:
    """Read tab-separated (index, question, sentence, label) records.

    A header line is recognized by a non-numeric first column and skipped.
    """
    records = []
    skipped = 0
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        columns = line.split("\t")
        if len(columns) != 4:
            skipped += 1
            continue
        index, question, sentence, label = columns
        if lineno == 1 and not index.strip().isdigit():
            continue
        records.append((question, sentence, label))
    if skipped:
        logger.warning("skipped %d malformed lines in %s", skipped, path)
    return records


def build_coqa_examples(
    data: Iterable[tuple[Passage, list[GoldConversation]]],
    splitter: Callable[[str], list[SentenceSpan]] | None = None,
) -> list[ClassifierExample]:
    """Fine-tuning examples from gold conversations.

    Each answerable turn yields one positive pairing its question with the
    sentence holding the gold answer span; no hard negatives are generated
    for answerable turns. Each unanswerable turn yields one negative per
    passage sentence. History is the serialization of all preceding gold
    turns. Turns whose context sentence cannot be located are skipped with
    a warning.
    """
    examples = []
    skipped = 0
    for passage, conversations in data:
        sentences = tuple(splitter(passage.text)) if splitter else passage.sentences
        for conversation in conversations:
            history_parts: list[str] = []
            for turn in conversation.turns:
                history = " ".join(history_parts)
                if turn.unanswerable:
                    for sentence in sentences:
                        examples.append(
                            ClassifierExample(
                                history, turn.question, sentence.text,
                                "not_answerable", "coqa_negative",
                            )
                        )
                else:
                    context = _locate_context(passage, sentences, turn.span_start, turn.span_text)
                    if context is None:
                        skipped += 1
                        logger.warning(
                            "no context sentence for turn %d of %s; skipped",
                            turn.turn, conversation.passage_id,
                        )
                    else:
                        examples.append(
                            ClassifierExample(
                                history, turn.question, context.text,
                                "answerable", "coqa_positive",
                            )
                        )
                history_parts.append(f"{turn.question} {turn.answer}")
    if skipped:
        logger.warning("skipped %d turns with no locatable context sentence", skipped)
    return examples


def _locate_context(
    passage: Passage,
    sentences: Sequence[SentenceSpan],
    span_start: int,
    span_text: str,
) -> SentenceSpan | None:
    anchor = span_start
    if anchor < 0 and span_text:
        anchor = passage.text.find(span_text)
    if anchor < 0:
        return None
    for sentence in sentences:
        if sentence.start_char <= anchor < sentence.end_char:
            return sentence
    return None


def write_examples(examples: Iterable[ClassifierExample], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for example in examples:
            handle.write(json.dumps(asdict(example), ensure_ascii=False) + "\n")


def read_examples(path: str | Path) -> list[ClassifierExample]:
    examples = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            examples.append(ClassifierExample(**json.loads(line)))
    return examples


def focal_loss(p_t: float, gamma: float = 2.0) -> float:
    """Cross-entropy scaled by (1 - p_t)^gamma.

    ``p_t`` is the predicted probability of the true class. gamma = 0
    recovers plain negative log-likelihood; larger gamma down-weights
    well-classified examples. p_t = 0 is clamped to EPSILON.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if not 0.0 <= p_t <= 1.0:
        raise ValueError(f"p_t must lie in [0, 1], got {p_t}")
    p = max(p_t, EPSILON)
    return -((1.0 - p) ** gamma) * math.log(p)


def focal_loss_grad(p_t: float, gamma: float = 2.0) -> float:
    """Analytic derivative of the focal loss with respect to p_t."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    p = max(p_t, EPSILON)
    if gamma == 0:
        return -1.0 / p
    return gamma * (1.0 - p) ** (gamma - 1.0) * math.log(p) - (1.0 - p) ** gamma / p


def mean_focal_loss(probs: Iterable[float], gamma: float = 2.0) -> float:
    """Batch form: mean focal loss over the true-class probabilities."""
    values = [focal_loss(p, gamma) for p in probs]
    if not values:
        raise ValueError("cannot average over an empty batch")
    return sum(values) / len(values)
