"""Shared fixtures. Generation helpers live in corpusgen, transport doubles
in stubs, brute-force references in oracles."""

from __future__ import annotations

import random

import pytest

import corpusgen
from planforge.synthesis import StepKind


@pytest.fixture
def news_doc():
    return corpusgen.make_news_doc(1, seed=11)


@pytest.fixture
def train_docs():
    return [corpusgen.make_news_doc(i, seed=23) for i in range(6)]


def plan_steps_for(doc, rng: random.Random | None = None):
    """Synthetic plan steps drawn from the document body's own words."""
    rng = rng or random.Random(doc.id)
    words = [w for w in doc.body.split() if not w.startswith("#")]
    ratios = {
        StepKind.SUMMARY: 0.10,
        StepKind.OUTLINE: 0.05,
        StepKind.KEY_INFORMATION: 0.08,
    }
    steps = {}
    for kind, ratio in ratios.items():
        take = max(1, round(len(words) * ratio))
        start = rng.randrange(0, len(words) - take + 1)
        picked = [w.strip(".").lower() for w in words[start : start + take]]
        picked[0] = picked[0].capitalize()
        steps[kind] = " ".join(picked) + "."
    return steps


@pytest.fixture
def plan_steps(news_doc):
    return plan_steps_for(news_doc)
