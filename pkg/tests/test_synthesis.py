"""Extraction prompts, candidate generation and candidate persistence."""

from __future__ import annotations

import json

import pytest

from planforge.corpus import estimate_tokens
from planforge.errors import TransportError, ValidationError
from planforge.llmclient import ClientMode, LLMClient, RetryPolicy
from planforge.synthesis import (
    EXTRACTION_INSTRUCTIONS,
    CandidateSet,
    SamplerParams,
    StepKind,
    build_extraction_prompt,
    generate_candidates,
    read_candidate_sets,
    scaffold_sentinels,
    write_candidate_sets,
)
from stubs import ConstantTransport, ScriptedTransport


def client_for(tmp_path, transport):
    return LLMClient(
        cache_dir=tmp_path / "cache",
        mode=ClientMode.RECORD,
        transport=transport,
        retry=RetryPolicy(max_attempts=1),
    )


def params_for(**kwargs):
    defaults = dict(model_id="sampler", max_output_tokens=64, temperature=0.7)
    defaults.update(kwargs)
    return SamplerParams(**defaults)


def test_prompt_structure(news_doc):
    prompt = build_extraction_prompt(news_doc, StepKind.SUMMARY)
    assert prompt.startswith(EXTRACTION_INSTRUCTIONS[StepKind.SUMMARY])
    assert f"### Article\n{news_doc.body}\n" in prompt
    assert prompt.endswith("\n### Summary\n")


def test_prompt_labels_differ_by_kind(news_doc):
    outline = build_extraction_prompt(news_doc, StepKind.OUTLINE)
    key_info = build_extraction_prompt(news_doc, StepKind.KEY_INFORMATION)
    assert outline.endswith("\n### Outline\n")
    assert key_info.endswith("\n### Key Information\n")


def test_prompt_includes_exemplars_before_the_target(news_doc):
    exemplars = [("Old article one.", "Old summary one.")]
    prompt = build_extraction_prompt(news_doc, StepKind.SUMMARY, exemplars)
    first = prompt.index("Old article one.")
    second = prompt.index("Old summary one.")
    target = prompt.index(news_doc.body)
    assert first < second < target
    assert prompt.count("### Article") == 2
    assert prompt.count("### Summary") == 2


def test_prompt_honors_input_limit(news_doc):
    limit = 700
    prompt = build_extraction_prompt(news_doc, StepKind.SUMMARY, input_limit=limit)
    assert estimate_tokens(prompt) <= int(limit * 0.95)
    assert news_doc.body not in prompt  # body had to shrink
    unlimited = build_extraction_prompt(news_doc, StepKind.SUMMARY)
    assert estimate_tokens(unlimited) > limit


def test_prompt_rejects_hopeless_input_limit(news_doc):
    with pytest.raises(ValidationError):
        build_extraction_prompt(news_doc, StepKind.SUMMARY, input_limit=20)


def test_scaffold_sentinels():
    assert scaffold_sentinels(StepKind.SUMMARY) == ("### Article", "### Summary")


def test_candidate_set_cardinality_is_validated():
    with pytest.raises(ValidationError):
        CandidateSet(doc_id="d", kind=StepKind.SUMMARY, candidates=["a"], k=2)
    with pytest.raises(ValidationError):
        CandidateSet(doc_id="d", kind=StepKind.SUMMARY, candidates=[], k=0)


def test_generate_candidates_uses_distinct_seeds(tmp_path, news_doc):
    transport = ScriptedTransport(
        [("one", "complete"), ("two", "complete"), ("three", "complete")]
    )
    cset = generate_candidates(
        news_doc,
        StepKind.SUMMARY,
        3,
        params_for(base_seed=100),
        client_for(tmp_path, transport),
    )
    assert cset.candidates == ["one", "two", "three"]
    assert [r.seed for r in transport.requests] == [100, 101, 102]
    prompts = {r.prompt for r in transport.requests}
    assert len(prompts) == 1  # one prompt, sampled under different seeds


def test_identical_rerun_is_served_from_cache(tmp_path, news_doc):
    transport = ConstantTransport("cand")
    client = client_for(tmp_path, transport)
    first = generate_candidates(
        news_doc, StepKind.OUTLINE, 2, params_for(), client
    )
    again = generate_candidates(
        news_doc, StepKind.OUTLINE, 2, params_for(), client
    )
    assert first.candidates == again.candidates
    assert len(transport.requests) == 2  # k calls total, rerun fully cached


def test_empty_completion_is_regenerated_once(tmp_path, news_doc):
    transport = ScriptedTransport([("", "complete"), ("recovered", "complete")])
    cset = generate_candidates(
        news_doc,
        StepKind.SUMMARY,
        1,
        params_for(base_seed=7),
        client_for(tmp_path, transport),
    )
    assert cset.candidates == ["recovered"]
    # Regeneration seed lands outside the first-round range: base + k + index.
    assert [r.seed for r in transport.requests] == [7, 8]


def test_still_empty_candidate_is_recorded_empty(tmp_path, news_doc):
    transport = ScriptedTransport([("", "complete"), ("", "complete")])
    cset = generate_candidates(
        news_doc, StepKind.SUMMARY, 1, params_for(), client_for(tmp_path, transport)
    )
    assert cset.candidates == [""]


def test_transport_failures_carry_the_document_id(tmp_path, news_doc):
    transport = ScriptedTransport([TransportError("down")])
    with pytest.raises(TransportError) as excinfo:
        generate_candidates(
            news_doc, StepKind.SUMMARY, 1, params_for(), client_for(tmp_path, transport)
        )
    assert excinfo.value.doc_id == news_doc.id


def test_candidate_sets_round_trip(tmp_path, news_doc):
    sets = [
        CandidateSet(news_doc.id, StepKind.SUMMARY, ["a", "", "c"], 3),
        CandidateSet(news_doc.id, StepKind.OUTLINE, ["- x\n- y"], 1),
    ]
    path = tmp_path / "candidates.jsonl"
    write_candidate_sets(path, sets)
    assert read_candidate_sets(path) == sets


def test_read_candidate_sets_rejects_index_gaps(tmp_path):
    path = tmp_path / "gappy.jsonl"
    rows = [
        {"doc_id": "d", "kind": "summary", "index": 0, "text": "a"},
        {"doc_id": "d", "kind": "summary", "index": 2, "text": "c"},
    ]
    path.write_text(
        "".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8"
    )
    with pytest.raises(ValidationError, match="gaps"):
        read_candidate_sets(path)
