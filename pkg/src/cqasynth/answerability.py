"""Two-level answerability classification.

A candidate pair is first checked against the context sentence of its
answer; if that fails, every other sentence of the passage is scored. The
three-way outcome is keep (answerable in its own context), discard (the
question is answerable somewhere else, so it is paired with a wrong
answer), or unknown (not answerable from the passage at all). Unknown
pairs survive with their answer replaced by the literal "unknown".

All comparisons against the threshold are strict: a probability exactly
equal to the threshold fails the check.
"""
from __future__ import annotations

from dataclasses import replace

from . import backends
from .corpus import ClassifierVerdict, Passage, QAPair, SentenceSpan, UNKNOWN_ANSWER

__all__ = [
    "ClassifierVerdict",
    "find_context_sentence",
    "classify",
    "classify_context_level",
    "apply_verdict",
]


def find_context_sentence(passage: Passage, pair: QAPair) -> SentenceSpan:
    """The sentence holding the pair's answer.

    Anchored at the source span's start character. For open-ended pairs
    whose revised answer occurs verbatim in the passage, the occurrence
    nearest the span wins; closed-ended literals never occur in the passage,
    so they always use the span's sentence.
    """
    if pair.source_span is None:
        raise ValueError(f"pair at turn {pair.turn} has no source span")
    anchor = pair.source_span.start_char
    if pair.answer_type == "open" and pair.answer:
        best = None
        start = passage.text.find(pair.answer)
        while start != -1:
            distance = abs(start - anchor)
            if best is None or distance < best[0]:
                best = (distance, start)
            start = passage.text.find(pair.answer, start + 1)
        if best is not None:
            return passage.sentence_at(best[1])
    return passage.sentence_at(anchor)


def classify(
    scorer: backends.AnswerabilityScorer,
    pair: QAPair,
    passage: Passage,
    history_text: str,
    tau: float,
) -> ClassifierVerdict:
    """Two-level classification of one candidate pair.

    Context level: score the answer's context sentence; strictly above the
    threshold means keep, and the passage level never runs. Passage level:
    score every other sentence; if any exceeds the threshold the pair is
    discarded, otherwise it is unknown. A single-sentence passage has no
    other sentences and therefore can never produce discard.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"threshold must lie in (0, 1], got {tau}")
    if not passage.sentences:
        raise ValueError("passage has no sentences")
    context = find_context_sentence(passage, pair)
    context_prob = backends.score(scorer, history_text, pair.question, context.text)
    if context_prob > tau:
        return ClassifierVerdict("keep", context_prob, (), context.index)
    passage_probs = tuple(
        (sentence.index, backends.score(scorer, history_text, pair.question, sentence.text))
        for sentence in passage.sentences
        if sentence.index != context.index
    )
    if passage_probs and max(prob for _, prob in passage_probs) > tau:
        return ClassifierVerdict("discard", context_prob, passage_probs, context.index)
    return ClassifierVerdict("unknown", context_prob, passage_probs, context.index)


def classify_context_level(
    scorer: backends.AnswerabilityScorer,
    pair: QAPair,
    passage: Passage,
    history_text: str,
    tau: float,
) -> ClassifierVerdict:
    """Context-level check only: keep or unknown, never discard.

    This is the shallow ablation arm; the passage level is skipped entirely,
    so the verdict carries no passage probabilities.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"threshold must lie in (0, 1], got {tau}")
    context = find_context_sentence(passage, pair)
    context_prob = backends.score(scorer, history_text, pair.question, context.text)
    outcome = "keep" if context_prob > tau else "unknown"
    return ClassifierVerdict(outcome, context_prob, (), context.index)


def apply_verdict(pair: QAPair, verdict: ClassifierVerdict) -> QAPair:
    """Finalize a pending pair according to its verdict.

    keep: answer untouched. unknown: the answer is replaced with the literal
    "unknown" and the pair is marked unknownized. discard: the pair is
    marked for the audit list.
    """
    if verdict.outcome == "keep":
        return replace(pair, status="kept", verdict=verdict)
    if verdict.outcome == "unknown":
        return replace(
            pair,
            status="unknownized",
            answer=UNKNOWN_ANSWER,
            answer_type="unknown",
            verdict=verdict,
        )
    return replace(pair, status="discarded", verdict=verdict)
