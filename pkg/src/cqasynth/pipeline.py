"""Autoregressive synthesis orchestrator.

Per turn: extract a span, draw the answer type, generate the candidate
pair, classify it, and apply the verdict. Kept and unknownized pairs enter
the conversation history for later turns; discarded pairs go to the audit
list and never reach any subsequent encoder input, so their errors cannot
propagate through the conversation.
"""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple, Sequence

from . import answerability, backends, extraction, generation
from .corpus import Conversation, Passage
from .generation import DEFAULT_TYPE_RATIO, GenerationParseError, TypeRatio

logger = logging.getLogger(__name__)

AC_LEVELS = ("full", "context", "none")


class ConfigError(ValueError):
    """A generation configuration file or value is invalid."""


@dataclass(frozen=True)
class GenerationConfig:
    """All pipeline knobs; the defaults reproduce the reference settings."""

    ratio: TypeRatio = DEFAULT_TYPE_RATIO
    tau: float = 0.5
    max_words_after: int = 32
    max_words_before: int | None = None
    beam_size: int = 4
    max_kept_turns: int = 10
    max_attempts_per_conversation: int = 15
    seed: int = 0
    gamma: float = 2.0
    history_length_budget: int = 512
    ac_level: str = "full"

    def __post_init__(self) -> None:
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau}")
        if self.max_words_after < 0:
            raise ConfigError("max_words_after must be >= 0")
        if self.max_words_before is not None and self.max_words_before < 0:
            raise ConfigError("max_words_before must be >= 0 when given")
        if self.beam_size < 1:
            raise ConfigError("beam_size must be >= 1")
        if self.max_kept_turns < 1:
            raise ConfigError("max_kept_turns must be >= 1")
        if self.max_attempts_per_conversation < self.max_kept_turns:
            raise ConfigError("max_attempts_per_conversation must be >= max_kept_turns")
        if self.gamma < 0:
            raise ConfigError("gamma must be >= 0")
        if self.history_length_budget < 1:
            raise ConfigError("history_length_budget must be >= 1")
        if self.ac_level not in AC_LEVELS:
            raise ConfigError(f"ac_level must be one of {AC_LEVELS}, got {self.ac_level!r}")

    def to_dict(self) -> dict:
        return {
            "ratio": str(self.ratio),
            "tau": self.tau,
            "max_words_after": self.max_words_after,
            "max_words_before": self.max_words_before,
            "beam_size": self.beam_size,
            "max_kept_turns": self.max_kept_turns,
            "max_attempts_per_conversation": self.max_attempts_per_conversation,
            "seed": self.seed,
            "gamma": self.gamma,
            "history_length_budget": self.history_length_budget,
            "ac_level": self.ac_level,
        }


def _optional_int(value: str) -> int | None:
    return None if value.lower() in ("none", "-") else int(value)


_CONFIG_PARSERS = {
    "ratio": TypeRatio.parse,
    "tau": float,
    "max_words_after": int,
    "max_words_before": _optional_int,
    "beam_size": int,
    "max_kept_turns": int,
    "max_attempts_per_conversation": int,
    "seed": int,
    "gamma": float,
    "history_length_budget": int,
    "ac_level": str,
}


def parse_config(text: str, source: str = "<config>") -> GenerationConfig:
    """Parse flat ``key = value`` lines into a configuration."""
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}: line {lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        parser = _CONFIG_PARSERS.get(key)
        if parser is None:
            raise ConfigError(f"{source}: line {lineno}: unknown key {key!r}")
        try:
            overrides[key] = parser(value.strip())
        except ValueError as exc:
            raise ConfigError(f"{source}: line {lineno}: {exc}") from exc
    return GenerationConfig(**overrides)


def load_config(path: str | Path) -> GenerationConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), source=str(path))


class BackendSuite(NamedTuple):
    """The three model roles the pipeline needs."""

    extractor: backends.SpanExtractorBackend
    generator: backends.Seq2SeqBackend
    scorer: backends.AnswerabilityScorer

    @property
    def supports_concurrent_calls(self) -> bool:
        return all(
            getattr(member, "supports_concurrent_calls", False) for member in self
        )


class ConversationResult(NamedTuple):
    conversation: Conversation
    attempts: int
    error: str | None


class DatasetResult(NamedTuple):
    dataset: list[Conversation]
    errors: list[tuple[str, str]]


def rng_for_passage(seed: int, passage_id: str) -> random.Random:
    """Independent per-passage RNG stream, stable across run order and platforms."""
    return random.Random(f"{seed}|{passage_id}")


def synthesize_conversation(
    passage: Passage,
    suite: BackendSuite,
    config: GenerationConfig,
    rng: random.Random,
) -> ConversationResult:
    """Generate one conversation for a passage.

    The loop ends when max_kept_turns pairs were kept or unknownized, the
    extractor returns no span, or the attempt budget is exhausted. Backend
    failures abort the conversation with partial results preserved and an
    error record; malformed generator output only costs the attempt.
    """
    pairs: list = []
    discarded: list = []
    error = None
    attempts = 0
    while len(pairs) < config.max_kept_turns and attempts < config.max_attempts_per_conversation:
        attempts += 1
        history = Conversation(passage.id, passage.domain, tuple(pairs), tuple(discarded))
        try:
            span = extraction.run_cae(suite.extractor, passage, history)
            if span is None:
                break
            answer_type = generation.select_answer_type(rng, config.ratio)
            candidate = generation.generate_qa(
                suite.generator, passage, span, history, answer_type, config
            )
            if config.ac_level == "none":
                final = replace(candidate, status="kept")
            else:
                history_text = extraction.serialize_history(
                    history, config.history_length_budget
                )
                if config.ac_level == "context":
                    verdict = answerability.classify_context_level(
                        suite.scorer, candidate, passage, history_text, config.tau
                    )
                else:
                    verdict = answerability.classify(
                        suite.scorer, candidate, passage, history_text, config.tau
                    )
                final = answerability.apply_verdict(candidate, verdict)
        except GenerationParseError as exc:
            logger.debug("attempt %d on %s rejected: %s", attempts, passage.id, exc)
            continue
        except backends.BackendError as exc:
            error = str(exc)
            logger.error("conversation for %s aborted: %s", passage.id, exc)
            break
        if final.status == "discarded":
            discarded.append(final)
        else:
            pairs.append(final)
    return ConversationResult(
        Conversation(passage.id, passage.domain, tuple(pairs), tuple(discarded)),
        attempts,
        error,
    )


def refilter_conversation(
    conversation: Conversation,
    passage: Passage,
    scorer: backends.AnswerabilityScorer,
    tau: float,
    level: str = "full",
) -> Conversation:
    """Re-run answerability classification over an existing conversation.

    Intended for datasets generated without filtering: kept pairs are
    re-classified with the surviving turns as history; pairs that are
    already unknownized pass through unchanged, since their original
    answers no longer exist. ``level`` is ``context`` for the shallow arm
    (keep or unknownize, never discard) or ``full``/``passage`` for the
    complete two-level rule. Discards are appended to the audit list.
    """
    if level not in ("context", "passage", "full"):
        raise ValueError(f"unknown filter level {level!r}")
    surviving: list = []
    discarded = list(conversation.discarded)
    for pair in conversation.pairs:
        if pair.status == "unknownized":
            surviving.append(pair)
            continue
        history_text = " ".join(f"{p.question} {p.answer}" for p in surviving)
        if level == "context":
            verdict = answerability.classify_context_level(
                scorer, pair, passage, history_text, tau
            )
        else:
            verdict = answerability.classify(scorer, pair, passage, history_text, tau)
        final = answerability.apply_verdict(pair, verdict)
        if final.status == "discarded":
            discarded.append(final)
        else:
            surviving.append(final)
    return Conversation(
        conversation.passage_id, conversation.domain, tuple(surviving), tuple(discarded)
    )


def synthesize_dataset(
    passages: Sequence[Passage],
    suite: BackendSuite,
    config: GenerationConfig,
) -> DatasetResult:
    """One conversation per passage; conversations with no kept pairs are dropped.

    Every passage gets its own RNG stream derived from (seed, passage id),
    so results do not depend on the order passages are supplied. Output is
    ordered by passage id. Per-passage errors are collected and the run
    continues.
    """
    if not passages:
        raise ValueError("passage list must be non-empty")
    dataset = []
    errors = []
    for passage in sorted(passages, key=lambda p: p.id):
        rng = rng_for_passage(config.seed, passage.id)
        result = synthesize_conversation(passage, suite, config, rng)
        if result.error is not None:
            errors.append((passage.id, result.error))
        if result.conversation.pairs:
            dataset.append(result.conversation)
    return DatasetResult(dataset, errors)
