"""Tests for the autoregressive orchestrator, configuration, and re-filtering."""
from __future__ import annotations

import pytest

from cqasynth.backends import (
    ConstantScorer,
    MockScorer,
    NoSpanExtractor,
    RuleSpanExtractor,
    TemplateSeq2Seq,
)
from cqasynth.corpus import Conversation, Passage, write_dataset
from cqasynth.extraction import encode_cae_input
from cqasynth.generation import TypeRatio
from cqasynth.pipeline import (
    BackendSuite,
    ConfigError,
    GenerationConfig,
    load_config,
    parse_config,
    refilter_conversation,
    rng_for_passage,
    synthesize_conversation,
    synthesize_dataset,
)

from conftest import make_mock_suite, make_toy_passages


class RecordingExtractor:
    """Wraps an extractor and records the equivalent encoder input per call."""

    supports_concurrent_calls = True

    def __init__(self, inner):
        self.inner = inner
        self.inputs: list[str] = []

    def extract_span(self, passage, history):
        self.inputs.append(encode_cae_input(passage, history))
        return self.inner.extract_span(passage, history)


class RecordingSeq2Seq:
    supports_concurrent_calls = True
    beam_size = 4

    def __init__(self, inner):
        self.inner = inner
        self.inputs: list[str] = []

    def generate(self, encoded_input):
        self.inputs.append(encoded_input)
        return self.inner.generate(encoded_input)


class RecordingScorer:
    supports_concurrent_calls = True

    def __init__(self, inner):
        self.inner = inner
        self.histories: list[str] = []

    def probability(self, history_text, question, sentence):
        self.histories.append(history_text)
        return self.inner.probability(history_text, question, sentence)


@pytest.fixture
def abc_passage() -> Passage:
    return Passage.from_text(
        "abc", "news", "Alpha builds boats. Bravo sells maps. Carol flies kites."
    )


# ---------------------------------------------------------------------------
# configuration


def test_config_defaults():
    config = GenerationConfig()
    assert config.ratio == TypeRatio(8, 1, 1)
    assert config.tau == 0.5
    assert config.max_words_after == 32
    assert config.beam_size == 4


def test_config_validation():
    with pytest.raises(ConfigError):
        GenerationConfig(max_attempts_per_conversation=3, max_kept_turns=5)
    with pytest.raises(ConfigError):
        GenerationConfig(tau=0.0)
    with pytest.raises(ConfigError):
        GenerationConfig(ac_level="sometimes")


def test_parse_config_file(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text(
        "# comment line\n"
        "ratio = 4:3:3\n"
        "tau = 0.7\n"
        "seed = 99\n"
        "max_kept_turns = 4\n"
        "max_attempts_per_conversation = 6\n"
    )
    config = load_config(path)
    assert config.ratio == TypeRatio(4, 3, 3)
    assert config.tau == 0.7
    assert config.seed == 99
    assert config.beam_size == 4  # untouched default


def test_parse_config_unknown_key():
    with pytest.raises(ConfigError, match="banana"):
        parse_config("banana = 1\n")


# ---------------------------------------------------------------------------
# conversation synthesis


def test_no_span_means_empty_conversation(abc_passage):
    suite = BackendSuite(NoSpanExtractor(), TemplateSeq2Seq(), ConstantScorer(1.0))
    result = synthesize_conversation(
        abc_passage, suite, GenerationConfig(), rng_for_passage(0, abc_passage.id)
    )
    assert result.conversation.pairs == ()
    assert result.error is None


def test_kept_turn_budget_respected(abc_passage):
    suite = BackendSuite(RuleSpanExtractor(), TemplateSeq2Seq(), ConstantScorer(1.0))
    config = GenerationConfig(max_kept_turns=3, max_attempts_per_conversation=5)
    result = synthesize_conversation(
        abc_passage, suite, config, rng_for_passage(0, abc_passage.id)
    )
    assert len(result.conversation.pairs) == 3
    assert result.attempts <= 5


def test_unknownized_turn_enters_history(abc_passage):
    questions = {
        "what about Alpha?": {0: 0.9},
        "what about Bravo?": {0: 0.1, 1: 0.2, 2: 0.3},
        "what about Carol?": {2: 0.9},
    }
    table = {(q, i): p for q, probs in questions.items() for i, p in probs.items()}
    scorer = MockScorer.for_passage(abc_passage, table, default=0.0)
    generator = RecordingSeq2Seq(TemplateSeq2Seq(open_question="what about {span}?"))
    suite = BackendSuite(RuleSpanExtractor(), generator, scorer)
    config = GenerationConfig(ratio=TypeRatio(1, 0, 0), max_kept_turns=3,
                              max_attempts_per_conversation=5)
    result = synthesize_conversation(
        abc_passage, suite, config, rng_for_passage(0, abc_passage.id)
    )
    statuses = [p.status for p in result.conversation.pairs]
    assert statuses == ["kept", "unknownized", "kept"]
    assert result.conversation.pairs[1].answer == "unknown"
    # the third generator input carries the unknownized turn verbatim
    assert "what about Bravo? unknown" in generator.inputs[2]


def test_backend_failure_preserves_partial_conversation(abc_passage):
    class FailsOnThird:
        supports_concurrent_calls = True

        def __init__(self):
            self.inner = RuleSpanExtractor()

        def extract_span(self, passage, history):
            if len(history.pairs) + len(history.discarded) >= 2:
                raise RuntimeError("adapter timeout")
            return self.inner.extract_span(passage, history)

    suite = BackendSuite(FailsOnThird(), TemplateSeq2Seq(), ConstantScorer(1.0))
    result = synthesize_conversation(
        abc_passage, suite, GenerationConfig(), rng_for_passage(0, abc_passage.id)
    )
    assert result.error is not None and "adapter timeout" in result.error
    assert len(result.conversation.pairs) == 2


def test_parse_errors_cost_only_the_attempt(abc_passage):
    class SometimesMalformed:
        supports_concurrent_calls = True
        beam_size = 4

        def __init__(self):
            self.inner = TemplateSeq2Seq(open_question="what about {span}?")
            self.calls = 0

        def generate(self, encoded_input):
            self.calls += 1
            if self.calls == 1:
                return "no separator at all"
            return self.inner.generate(encoded_input)

    suite = BackendSuite(RuleSpanExtractor(), SometimesMalformed(), ConstantScorer(1.0))
    config = GenerationConfig(ratio=TypeRatio(1, 0, 0), max_kept_turns=2,
                              max_attempts_per_conversation=4)
    result = synthesize_conversation(
        abc_passage, suite, config, rng_for_passage(0, abc_passage.id)
    )
    assert result.error is None
    assert len(result.conversation.pairs) == 2
    assert result.attempts == 3  # one wasted on the malformed output


# ---------------------------------------------------------------------------
# dataset synthesis


def test_dataset_deterministic_across_runs(tmp_path, toy_passages):
    config = GenerationConfig(seed=11)
    first = synthesize_dataset(toy_passages, make_mock_suite(11), config)
    second = synthesize_dataset(toy_passages, make_mock_suite(11), config)
    assert first.dataset == second.dataset
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_dataset(first.dataset, a)
    write_dataset(second.dataset, b)
    assert a.read_bytes() == b.read_bytes()


def test_dataset_independent_of_passage_order(toy_passages):
    config = GenerationConfig(seed=11)
    forward = synthesize_dataset(toy_passages, make_mock_suite(11), config)
    backward = synthesize_dataset(list(reversed(toy_passages)), make_mock_suite(11), config)
    assert forward.dataset == backward.dataset


def test_dataset_requires_passages():
    with pytest.raises(ValueError):
        synthesize_dataset([], make_mock_suite(), GenerationConfig())


def test_discarded_content_never_reaches_encoders(toy_passages):
    config = GenerationConfig(seed=3)
    total_discarded = 0
    for passage in toy_passages:
        extractor = RecordingExtractor(RuleSpanExtractor())
        generator = RecordingSeq2Seq(
            TemplateSeq2Seq(open_question="what about {span}?",
                            closed_question="is it about {span}?")
        )
        scorer = RecordingScorer(make_mock_suite(3).scorer)
        suite = BackendSuite(extractor, generator, scorer)
        result = synthesize_conversation(
            passage, suite, config, rng_for_passage(config.seed, passage.id)
        )
        recorded = extractor.inputs + generator.inputs + scorer.histories
        kept_questions = {p.question for p in result.conversation.pairs}
        for dropped in result.conversation.discarded:
            total_discarded += 1
            if dropped.question in kept_questions:
                # an identical question was independently kept; string-level
                # checks cannot attribute its occurrences
                continue
            assert all(dropped.question not in text for text in recorded)
        # positive control: every kept pair except the last shows up in history later
        kept = [p for p in result.conversation.pairs]
        for pair in kept[:-1]:
            assert any(pair.question in text for text in recorded)
    assert total_discarded > 0  # the fixture must actually exercise discards


def test_kept_pair_distribution_tracks_ratio():
    # the scorer is blind to the answer type, so the surviving answerable
    # pairs should still follow the 8:1:1 draw
    passages = make_toy_passages(3000)
    result = synthesize_dataset(passages, make_mock_suite(2), GenerationConfig(seed=2))
    kept = [p for c in result.dataset for p in c.pairs if p.status == "kept"]
    assert len(kept) >= 10_000
    total = len(kept)
    shares = {
        t: sum(p.answer_type == t for p in kept) / total for t in ("open", "yes", "no")
    }
    assert abs(shares["open"] - 0.80) < 0.02
    assert abs(shares["yes"] - 0.10) < 0.02
    assert abs(shares["no"] - 0.10) < 0.02


def test_every_pair_in_output_is_wellformed(toy_passages, mock_suite):
    result = synthesize_dataset(toy_passages, mock_suite, GenerationConfig(seed=0))
    assert result.dataset
    for conversation in result.dataset:
        assert len(conversation.pairs) <= GenerationConfig().max_kept_turns
        for pair in conversation.pairs:
            if pair.status == "unknownized":
                assert pair.answer == "unknown"
            if pair.answer_type in ("yes", "no"):
                assert pair.answer in ("yes", "no")


# ---------------------------------------------------------------------------
# standalone re-filtering


def _unfiltered_conversation(passage: Passage) -> Conversation:
    suite = BackendSuite(
        RuleSpanExtractor(), TemplateSeq2Seq(open_question="what about {span}?"),
        ConstantScorer(1.0),
    )
    config = GenerationConfig(ratio=TypeRatio(1, 0, 0), ac_level="none",
                              max_kept_turns=3, max_attempts_per_conversation=5)
    result = synthesize_conversation(
        passage, suite, config, rng_for_passage(0, passage.id)
    )
    assert [p.status for p in result.conversation.pairs] == ["kept"] * 3
    return result.conversation


def _refilter_scorer(passage: Passage) -> MockScorer:
    questions = {
        "what about Alpha?": {0: 0.9},                      # keep
        "what about Bravo?": {0: 0.1, 1: 0.2, 2: 0.3},      # unknown
        "what about Carol?": {0: 0.8, 1: 0.0, 2: 0.3},      # discard at full level
    }
    table = {(q, i): p for q, probs in questions.items() for i, p in probs.items()}
    return MockScorer.for_passage(passage, table, default=0.0)


def test_refilter_context_level_never_discards(abc_passage):
    conversation = _unfiltered_conversation(abc_passage)
    out = refilter_conversation(
        conversation, abc_passage, _refilter_scorer(abc_passage), 0.5, "context"
    )
    assert [p.status for p in out.pairs] == ["kept", "unknownized", "unknownized"]
    assert out.discarded == ()


def test_refilter_full_level_matches_classify(abc_passage):
    conversation = _unfiltered_conversation(abc_passage)
    out = refilter_conversation(
        conversation, abc_passage, _refilter_scorer(abc_passage), 0.5, "full"
    )
    assert [p.status for p in out.pairs] == ["kept", "unknownized"]
    assert [p.status for p in out.discarded] == ["discarded"]
    assert out.discarded[0].question == "what about Carol?"


def test_refilter_passage_level_is_full(abc_passage):
    conversation = _unfiltered_conversation(abc_passage)
    full = refilter_conversation(
        conversation, abc_passage, _refilter_scorer(abc_passage), 0.5, "full"
    )
    alias = refilter_conversation(
        conversation, abc_passage, _refilter_scorer(abc_passage), 0.5, "passage"
    )
    assert full == alias


def test_refilter_tau_one_keeps_nothing(abc_passage):
    conversation = _unfiltered_conversation(abc_passage)
    out = refilter_conversation(conversation, abc_passage, ConstantScorer(1.0), 1.0, "full")
    assert all(p.status == "unknownized" for p in out.pairs)
    assert not any(p.status == "kept" for p in out.pairs)


def test_refilter_leaves_unknownized_pairs_alone(abc_passage):
    conversation = _unfiltered_conversation(abc_passage)
    once = refilter_conversation(
        conversation, abc_passage, _refilter_scorer(abc_passage), 0.5, "full"
    )
    twice = refilter_conversation(
        once, abc_passage, _refilter_scorer(abc_passage), 0.5, "full"
    )
    assert twice == once
