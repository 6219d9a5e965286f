"""Measurement suite: token-level F1, per-type splits, classifier recall,
and human-evaluation sampling and aggregation.

The F1 normalization follows the conventional CQA scorer rules: lowercase,
strip punctuation, drop the articles a/an/the, collapse whitespace. Scores
are maximized over all reference answers for a turn.
"""
from __future__ import annotations

import hashlib
import json
import random
import re
import string
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import Conversation, GoldConversation, Passage

CONNECTIVITY = ("dependent", "independent", "unnatural")
ANSWERABILITY = ("answerable", "unanswerable")
CORRECTNESS = ("correct", "partially_correct", "incorrect")
TURN_TYPES = ("open", "closed", "unanswerable")

# tie-break priority when candidate classes are equally frequent
_TYPE_PRIORITY = {"unanswerable": 0, "closed": 1, "open": 2}

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


class AnnotationError(ValueError):
    """An annotation record violates the assessment-sheet rules."""


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation, drop articles, collapse whitespace."""
    text = text.lower().translate(_PUNCT_TABLE)
    text = _ARTICLES.sub(" ", text)
    return " ".join(text.split())


def _single_f1(prediction: str, reference: str) -> float:
    pred_tokens = normalize_answer(prediction).split()
    gold_tokens = normalize_answer(reference).split()
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    common = Counter(pred_tokens) & Counter(gold_tokens)
    overlap = sum(common.values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def token_f1(prediction: str, references: Sequence[str]) -> float:
    """Token-multiset F1 of the prediction, maximized over the references."""
    if not references:
        raise ValueError("at least one reference is required")
    return max(_single_f1(prediction, reference) for reference in references)


@dataclass(frozen=True)
class EvaluationReport:
    """Macro-averaged per-turn F1, grouped by passage domain (percent scale)."""

    per_domain: dict[str, float]
    turns_per_domain: dict[str, int]
    overall: float
    missing: int


def _as_prediction_map(predictions) -> dict[tuple[str, int], str]:
    if isinstance(predictions, Mapping):
        return dict(predictions)
    mapping: dict[tuple[str, int], str] = {}
    for conversation_id, turn, text in predictions:
        key = (conversation_id, turn)
        if key in mapping:
            raise ValueError(f"duplicate prediction id {key!r}")
        mapping[key] = text
    return mapping


def evaluate_cqa(
    predictions,
    gold: Sequence[tuple[Passage, list[GoldConversation]]],
) -> EvaluationReport:
    """Score predictions against gold conversations, averaged per turn.

    ``predictions`` maps (passage_id, turn) to the predicted answer, or is
    an iterable of (passage_id, turn, answer) triples (duplicates are an
    error). Gold turns without a prediction score 0 and are counted.
    """
    prediction_map = _as_prediction_map(predictions)
    scores: dict[str, list[float]] = defaultdict(list)
    missing = 0
    for passage, conversations in gold:
        for conversation in conversations:
            for turn in conversation.turns:
                predicted = prediction_map.get((conversation.passage_id, turn.turn))
                if predicted is None:
                    missing += 1
                    f1 = 0.0
                else:
                    f1 = token_f1(predicted, turn.candidates)
                scores[passage.domain].append(f1)
    per_domain = {d: 100.0 * sum(v) / len(v) for d, v in scores.items()}
    all_scores = [f1 for values in scores.values() for f1 in values]
    overall = 100.0 * sum(all_scores) / len(all_scores) if all_scores else 0.0
    return EvaluationReport(
        per_domain=per_domain,
        turns_per_domain={d: len(v) for d, v in scores.items()},
        overall=overall,
        missing=missing,
    )


def classify_candidate(text: str) -> str:
    """Class of one reference answer: closed (yes/no), unanswerable, or open."""
    norm = normalize_answer(text)
    if norm in ("yes", "no"):
        return "closed"
    if norm == "unknown":
        return "unanswerable"
    return "open"


def split_by_type(
    gold: Sequence[tuple[Passage, list[GoldConversation]]],
) -> dict[str, list[tuple[str, int]]]:
    """Partition gold turns by the most frequent class of their candidates.

    Ties go to the rarer class: unanswerable beats closed beats open. Every
    turn lands in exactly one class.
    """
    partition: dict[str, list[tuple[str, int]]] = {t: [] for t in TURN_TYPES}
    for _, conversations in gold:
        for conversation in conversations:
            for turn in conversation.turns:
                if not turn.candidates:
                    raise ValueError(
                        f"turn {turn.turn} of {conversation.passage_id} has no candidates"
                    )
                counts = Counter(classify_candidate(c) for c in turn.candidates)
                best = max(counts.items(), key=lambda kv: (kv[1], -_TYPE_PRIORITY[kv[0]]))
                partition[best[0]].append((conversation.passage_id, turn.turn))
    return partition


def evaluate_by_type(
    predictions,
    gold: Sequence[tuple[Passage, list[GoldConversation]]],
) -> dict[str, tuple[float | None, int]]:
    """Mean per-turn F1 within each type partition: (score, turn count)."""
    prediction_map = _as_prediction_map(predictions)
    partition = split_by_type(gold)
    turn_index = {
        (conv.passage_id, turn.turn): turn
        for _, conversations in gold
        for conv in conversations
        for turn in conv.turns
    }
    report: dict[str, tuple[float | None, int]] = {}
    for turn_type, keys in partition.items():
        if not keys:
            report[turn_type] = (None, 0)
            continue
        values = []
        for key in keys:
            predicted = prediction_map.get(key)
            turn = turn_index[key]
            values.append(0.0 if predicted is None else token_f1(predicted, turn.candidates))
        report[turn_type] = (100.0 * sum(values) / len(values), len(keys))
    return report


def ac_recall(
    verdicts: Sequence[tuple[bool, bool]],
) -> tuple[float | None, float | None]:
    """Per-class recall over (predicted answerable, gold answerable) pairs.

    Returns (answerable recall, unanswerable recall) as percentages; a class
    absent from the gold labels yields None rather than 0.
    """
    if not verdicts:
        raise ValueError("verdict list must be non-empty")
    answerable = [predicted for predicted, gold in verdicts if gold]
    unanswerable = [predicted for predicted, gold in verdicts if not gold]
    answerable_recall = (
        100.0 * sum(answerable) / len(answerable) if answerable else None
    )
    unanswerable_recall = (
        100.0 * sum(not p for p in unanswerable) / len(unanswerable)
        if unanswerable
        else None
    )
    return answerable_recall, unanswerable_recall


# ---------------------------------------------------------------------------
# human evaluation


@dataclass(frozen=True)
class EvalPacket:
    """One blind annotation packet: passage, history so far, and the pair."""

    packet_id: str
    passage_id: str
    passage_text: str | None
    history: tuple[tuple[str, str], ...]
    question: str
    answer: str

    def to_dict(self) -> dict:
        return {
            "packet_id": self.packet_id,
            "passage_id": self.passage_id,
            "passage": self.passage_text,
            "history": [{"question": q, "answer": a} for q, a in self.history],
            "question": self.question,
            "answer": self.answer,
        }


def sample_for_human_eval(
    datasets: Sequence[tuple[str, Sequence[Conversation]]],
    n_per_dataset: int,
    seed: int,
    passages: Mapping[str, Passage] | None = None,
) -> tuple[list[EvalPacket], dict[str, str]]:
    """Uniform sample of pairs from each dataset, without replacement.

    Packet ids are opaque hashes carrying no plaintext source marker; the
    returned key maps packet id back to the source label for unblinding
    after annotation. Deterministic for a fixed seed.
    """
    rng = random.Random(seed)
    packets: list[EvalPacket] = []
    key: dict[str, str] = {}
    for label, conversations in datasets:
        population = [
            (conversation, position)
            for conversation in conversations
            for position in range(len(conversation.pairs))
        ]
        if n_per_dataset > len(population):
            raise ValueError(
                f"cannot sample {n_per_dataset} pairs from dataset {label!r} "
                f"holding only {len(population)}"
            )
        for conversation, position in rng.sample(population, n_per_dataset):
            pair = conversation.pairs[position]
            digest = hashlib.sha1(
                f"{seed}|{label}|{conversation.passage_id}|{pair.turn}".encode("utf-8")
            ).hexdigest()[:12]
            passage_text = None
            if passages is not None and conversation.passage_id in passages:
                passage_text = passages[conversation.passage_id].text
            packets.append(
                EvalPacket(
                    packet_id=digest,
                    passage_id=conversation.passage_id,
                    passage_text=passage_text,
                    history=tuple(
                        (p.question, p.answer) for p in conversation.pairs[:position]
                    ),
                    question=pair.question,
                    answer=pair.answer,
                )
            )
            key[digest] = label
    rng.shuffle(packets)
    return packets, key


def write_packets(packets: Iterable[EvalPacket], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for packet in packets:
            handle.write(json.dumps(packet.to_dict(), ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class AnnotationRecord:
    """One annotator judgement for one packet.

    An unnatural question skips the other two items, so answerability and
    correctness must be absent exactly when connectivity is unnatural.
    """

    example_id: str
    connectivity: str
    answerability: str | None = None
    correctness: str | None = None

    def __post_init__(self) -> None:
        if self.connectivity not in CONNECTIVITY:
            raise AnnotationError(
                f"record {self.example_id}: unknown connectivity {self.connectivity!r}"
            )
        if self.answerability is not None and self.answerability not in ANSWERABILITY:
            raise AnnotationError(
                f"record {self.example_id}: unknown answerability {self.answerability!r}"
            )
        if self.correctness is not None and self.correctness not in CORRECTNESS:
            raise AnnotationError(
                f"record {self.example_id}: unknown correctness {self.correctness!r}"
            )
        if self.connectivity == "unnatural" and (
            self.answerability is not None or self.correctness is not None
        ):
            raise AnnotationError(
                f"record {self.example_id}: unnatural questions skip the other items"
            )


def read_annotations(path: str | Path) -> list[AnnotationRecord]:
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(AnnotationRecord(**json.loads(line)))
        except (json.JSONDecodeError, TypeError) as exc:
            raise AnnotationError(f"{path}: line {lineno}: {exc}") from exc
    return records


@dataclass(frozen=True)
class AggregateReport:
    """Percentages per assessment item; skipped items shrink the denominator."""

    total: int
    assessed: int
    connectivity: dict[str, float]
    answerability: dict[str, float]
    correctness: dict[str, float]


def aggregate_annotations(records: Sequence[AnnotationRecord]) -> AggregateReport:
    """Percentage table over annotation records.

    Connectivity is computed over all records; answerability and correctness
    only over records not judged unnatural. A non-unnatural record missing
    either item is rejected by id.
    """
    if not records:
        raise AnnotationError("no annotation records to aggregate")
    assessed = []
    for record in records:
        if record.connectivity != "unnatural":
            if record.answerability is None or record.correctness is None:
                raise AnnotationError(
                    f"record {record.example_id}: missing answerability or correctness"
                )
            assessed.append(record)

    def share(values: Iterable[str], options: tuple[str, ...], total: int) -> dict[str, float]:
        counts = Counter(values)
        return {o: (100.0 * counts[o] / total if total else 0.0) for o in options}

    return AggregateReport(
        total=len(records),
        assessed=len(assessed),
        connectivity=share((r.connectivity for r in records), CONNECTIVITY, len(records)),
        answerability=share(
            (r.answerability for r in assessed), ANSWERABILITY, len(assessed)
        ),
        correctness=share((r.correctness for r in assessed), CORRECTNESS, len(assessed)),
    )
