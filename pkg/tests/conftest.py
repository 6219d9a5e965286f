"""Shared fixtures: deterministic toy passages and mock backend suites."""
from __future__ import annotations

import random
from pathlib import Path

import pytest

from cqasynth.backends import HashScorer, RuleSpanExtractor, TemplateSeq2Seq
from cqasynth.corpus import Passage, load_coqa
from cqasynth.pipeline import BackendSuite

DATA_DIR = Path(__file__).parent / "data"

_NAMES = ["Alice Carter", "Bob Hale", "Cara Idris", "Dan Moore", "Elena Park", "Frank Yu"]
_PLACES = ["Lyon", "Malta", "Oslo", "Quito", "Seoul", "Turin"]
_THINGS = ["harbor", "market", "library", "station"]
_DOMAINS = ["children", "literature", "news", "exam"]


def make_toy_passage(i: int) -> Passage:
    """A small multi-sentence passage with capitalized entities, stable per index."""
    rng = random.Random(9000 + i)
    name = rng.choice(_NAMES)
    other = rng.choice([n for n in _NAMES if n != name])
    place, second_place = rng.sample(_PLACES, 2)
    thing = rng.choice(_THINGS)
    sentences = [
        f"{name} visited {place} in {1990 + i}.",
        f"The trip lasted {rng.randint(2, 9)} days.",
        f"{other} joined them near the old {thing}.",
        f"Later the group sailed to {second_place}.",
        "Nobody recalled the password.",
        f"A letter from {rng.choice(_NAMES)} arrived on Monday.",
    ]
    count = rng.randint(3, 6)
    text = " ".join(sentences[:count])
    return Passage.from_text(f"p{i:02d}", _DOMAINS[i % len(_DOMAINS)], text)


def make_toy_passages(count: int = 20) -> list[Passage]:
    return [make_toy_passage(i) for i in range(count)]


def make_mock_suite(seed: int = 0) -> BackendSuite:
    return BackendSuite(
        extractor=RuleSpanExtractor(),
        generator=TemplateSeq2Seq(
            open_question="what about {span}?",
            closed_question="is it about {span}?",
        ),
        scorer=HashScorer(seed=seed),
    )


@pytest.fixture
def toy_passages() -> list[Passage]:
    return make_toy_passages(20)


@pytest.fixture
def mock_suite() -> BackendSuite:
    return make_mock_suite(seed=0)


@pytest.fixture
def coqa_mini():
    return load_coqa(DATA_DIR / "coqa_mini.json")


@pytest.fixture
def coqa_mini_path() -> Path:
    return DATA_DIR / "coqa_mini.json"


@pytest.fixture
def qnli_mini_path() -> Path:
    return DATA_DIR / "qnli_mini.tsv"
