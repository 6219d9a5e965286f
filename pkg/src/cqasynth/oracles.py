"""Independent brute-force references used only by the test suite.

Each function re-states its target from first principles, structured for
readability rather than reuse. Nothing here may be imported by production
modules; the test suite enforces that.
"""
from __future__ import annotations

import string
from typing import Mapping, Sequence


def oracle_classify(
    probability_table: Mapping[int, float],
    context_index: int,
    num_sentences: int,
    tau: float,
) -> str:
    """Literal step-by-step evaluation of the two-level filtering rule."""
    # step 1: the sentence set is simply the indices 0 .. num_sentences - 1
    sentence_ids = list(range(num_sentences))

    # step 2: context-level check against the context sentence
    context_probability = probability_table[context_index]
    if context_probability > tau:
        return "keep"

    # step 3: passage-level check against every remaining sentence
    remaining_probabilities = []
    for sentence_id in sentence_ids:
        if sentence_id == context_index:
            continue
        remaining_probabilities.append(probability_table[sentence_id])

    if len(remaining_probabilities) == 0:
        # nothing else to compare against: the question is unanswerable
        return "unknown"

    highest = remaining_probabilities[0]
    for probability in remaining_probabilities[1:]:
        if probability > highest:
            highest = probability

    if highest > tau:
        return "discard"
    return "unknown"


def oracle_token_f1(prediction: str, reference: str) -> float:
    """Naive definitional token F1 for a single reference."""

    def clean_tokens(text: str) -> list[str]:
        lowered = text.lower()
        without_punct = []
        for character in lowered:
            if character in string.punctuation:
                continue
            without_punct.append(character)
        words = "".join(without_punct).split()
        kept = []
        for word in words:
            if word in ("a", "an", "the"):
                continue
            kept.append(word)
        return kept

    predicted = clean_tokens(prediction)
    expected = clean_tokens(reference)
    if len(predicted) == 0 and len(expected) == 0:
        return 1.0
    if len(predicted) == 0 or len(expected) == 0:
        return 0.0

    overlap = 0
    for word in set(predicted):
        count_in_prediction = 0
        for candidate in predicted:
            if candidate == word:
                count_in_prediction += 1
        count_in_reference = 0
        for candidate in expected:
            if candidate == word:
                count_in_reference += 1
        overlap += min(count_in_prediction, count_in_reference)

    if overlap == 0:
        return 0.0
    precision = overlap / len(predicted)
    recall = overlap / len(expected)
    return (2.0 * precision * recall) / (precision + recall)


def oracle_negative_count(
    sentences_per_passage: Sequence[int],
    unanswerable_per_passage: Sequence[int],
) -> int:
    """Expected negative-sample count: one per sentence per unanswerable turn."""
    if len(sentences_per_passage) != len(unanswerable_per_passage):
        raise ValueError("per-passage lists must have equal length")
    total = 0
    for sentence_count, unanswerable_count in zip(
        sentences_per_passage, unanswerable_per_passage
    ):
        total += sentence_count * unanswerable_count
    return total
