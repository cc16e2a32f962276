"""Corpus parsing, counting, segmentation, filtering and splitting."""

from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import corpusgen
import oracles
from planforge.corpus import (
    CorpusSplit,
    Document,
    count_sentences,
    count_words,
    detect_sections,
    document_to_record,
    estimate_tokens,
    filter_corpus,
    make_topic_context,
    parse_paired_record,
    read_documents,
    sentence_spans,
    split_corpus,
    split_sentences,
    truncate_at_sentence,
    write_documents,
)
from planforge.errors import ValidationError


def test_count_words_whitespace_split():
    assert count_words("The cat sat. The dog ran.") == 6
    assert count_words("  spaced   out  words ") == 3
    assert count_words("") == 0
    assert count_words("   ") == 0


def test_count_words_normalizes_composed_and_decomposed():
    composed = "café open"
    decomposed = "café open"
    assert count_words(composed) == count_words(decomposed) == 2


def test_split_sentences_pinned_cases():
    assert split_sentences("The cat sat. The dog ran.") == [
        "The cat sat.",
        "The dog ran.",
    ]
    assert split_sentences("e.g. one sentence") == ["e.g. one sentence"]
    assert split_sentences("Dr. Smith arrived. He sat.") == [
        "Dr. Smith arrived.",
        "He sat.",
    ]
    assert split_sentences("See fig. 3 for details.") == ["See fig. 3 for details."]


def test_split_requires_capital_or_digit_after_terminator():
    assert count_sentences("He said. then left.") == 1
    assert count_sentences("It rained. 42 days passed.") == 2
    assert count_sentences("Really?! Yes.") == 2


def test_newline_always_ends_a_sentence():
    assert count_sentences("one line\nanother line") == 2
    assert split_sentences("First part\nsecond part. Third.") == [
        "First part",
        "second part.",
        "Third.",
    ]


def test_count_sentences_empty_and_blank():
    assert count_sentences("") == 0
    assert count_sentences("  \n \n ") == 0


def test_sentence_spans_cover_their_text():
    text = "Alpha beta. Gamma delta? Epsilon.\nZeta eta."
    spans = sentence_spans(text)
    assert [text[a:b] for a, b in spans] == split_sentences(text)


@settings(max_examples=100)
@given(st.integers(min_value=1, max_value=400), st.integers(min_value=0, max_value=2**32))
def test_generated_prose_counts_match_oracle(n_words, seed):
    rng = random.Random(seed)
    text = corpusgen.make_prose(rng, n_words)
    assert count_words(text) == oracles.oracle_word_count(text) == n_words
    assert count_sentences(text) == oracles.oracle_sentence_count(text)


def test_generated_bodies_count_headings_too():
    rng = random.Random(5)
    body = corpusgen.make_body(rng, 1000, n_sections=3)
    assert count_words(body) == 1000
    assert count_sentences(body) == oracles.oracle_sentence_count(body)


def test_estimate_tokens_is_ceil_of_quarter_length():
    assert estimate_tokens("") == 0
    for n in range(1, 9):
        assert estimate_tokens("x" * n) == -(-n // 4)


def test_truncate_noop_when_text_fits():
    text = "Alpha beta. Gamma delta."
    kept, truncated = truncate_at_sentence(text, 1000)
    assert kept == text
    assert truncated is False


def test_truncate_cuts_at_sentence_boundary():
    text = "Alpha beta gamma. Delta epsilon zeta. Eta theta iota."
    budget = estimate_tokens("Alpha beta gamma. Delta epsilon zeta.")
    kept, truncated = truncate_at_sentence(text, budget)
    assert truncated is True
    assert kept == "Alpha beta gamma. Delta epsilon zeta."
    assert estimate_tokens(kept) <= budget


def test_truncate_falls_back_to_word_boundary():
    text = "Alpha beta gamma delta epsilon zeta eta theta"
    kept, truncated = truncate_at_sentence(text, 4)
    assert truncated is True
    assert text.startswith(kept)
    assert estimate_tokens(kept) <= 4
    assert kept and not kept.endswith(" ")
    # the cut may not split a word: the remainder starts at a space
    assert text[len(kept)] == " "


def test_truncate_returns_empty_when_nothing_fits():
    kept, truncated = truncate_at_sentence("supercalifragilistic word", 1)
    assert truncated is True
    assert estimate_tokens(kept) <= 1


def test_detect_sections_markdown_and_wiki():
    assert detect_sections("# Intro\n\ntext\n\n## Details\n\nmore") == [
        "Intro",
        "Details",
    ]
    assert detect_sections("== History ==\ntext\n=== Later ===\nmore") == [
        "History",
        "Later",
    ]


def test_detect_sections_title_case_lines():
    body = "Early Results\n\nAlpha beta gamma delta. More text here."
    assert detect_sections(body) == ["Early Results"]
    prose = "This is just a long opening sentence that keeps going and going today.\n\nMore."
    assert detect_sections(prose) == []


def test_detect_sections_custom_pattern():
    body = "SECTION: Alpha\ntext\nSECTION: Beta\nmore"
    assert detect_sections(body, heading_pattern=r"^SECTION: (?P<name>.+)$") == [
        "Alpha",
        "Beta",
    ]


def test_make_topic_context_pinned():
    assert make_topic_context("Glass Frogs") == (
        "Generate a comprehensive Wikipedia page about the specified topic.\n"
        "Topic: Glass Frogs"
    )


def test_parse_paired_record_from_mapping_and_json_line():
    record = {
        "id": "d1",
        "title": "T",
        "context": "Some context.",
        "body": "# Head\n\nAlpha beta. Gamma delta.",
    }
    doc = parse_paired_record(record)
    via_json = parse_paired_record(json.dumps(record))
    assert doc == via_json
    assert doc.id == "d1"
    assert doc.word_count == count_words(doc.body)
    assert doc.sentence_count == count_sentences(doc.body)
    assert doc.sections == ["Head"]


def test_parse_paired_record_derives_context_from_title():
    doc = parse_paired_record({"id": "d2", "title": "Reefs", "body": "Alpha beta."})
    assert doc.context == make_topic_context("Reefs")


def test_parse_paired_record_derives_stable_id():
    record = {"title": "T", "context": "c", "body": "Alpha beta."}
    a = parse_paired_record(dict(record))
    b = parse_paired_record(dict(record))
    assert a.id == b.id
    assert a.id.startswith("doc-")


def test_parse_paired_record_requires_body():
    with pytest.raises(ValidationError):
        parse_paired_record({"id": "d3", "title": "T", "context": "c"})
    with pytest.raises(ValidationError):
        parse_paired_record({"id": "d3", "title": "", "body": "Alpha."})


def test_document_requires_nonempty_body_and_context():
    with pytest.raises(ValidationError):
        Document(
            id="x", title="", body=" ", context="c",
            sections=[], word_count=0, sentence_count=0,
        )


def test_read_documents_round_trip(tmp_path):
    docs = [corpusgen.make_news_doc(i, seed=3, body_words=60) for i in range(4)]
    path = tmp_path / "corpus.jsonl"
    write_documents(path, docs)
    assert read_documents(path) == docs


def test_read_documents_rejects_duplicate_ids(tmp_path):
    record = corpusgen.make_news_record(0, seed=1, body_words=40, context_words=10)
    path = tmp_path / "dup.jsonl"
    path.write_text(
        json.dumps(record) + "\n" + json.dumps(record) + "\n", encoding="utf-8"
    )
    with pytest.raises(ValidationError, match="dup.jsonl:2"):
        read_documents(path)


def test_read_documents_reports_bad_json_with_location(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "a"\n', encoding="utf-8")
    with pytest.raises(ValidationError, match="bad.jsonl:1"):
        read_documents(path)


def test_document_to_record_round_trips_through_parse():
    doc = corpusgen.make_news_doc(7, seed=9, body_words=80)
    assert parse_paired_record(document_to_record(doc)) == doc


def _doc_with_words(n_words: int, sections: bool = True):
    rng = random.Random(n_words)
    body = (
        corpusgen.make_body(rng, n_words)
        if sections
        else corpusgen.make_prose(rng, n_words)
    )
    return parse_paired_record(
        {"id": f"w{n_words}-{sections}", "title": "T", "context": "c", "body": body}
    )


def test_filter_corpus_word_boundary_is_inclusive():
    docs = [_doc_with_words(999), _doc_with_words(1000), _doc_with_words(1001)]
    kept = filter_corpus(docs, min_words=1000)
    assert [d.word_count for d in kept] == [1000, 1001]


def test_filter_corpus_section_requirement():
    plain = _doc_with_words(1200, sections=False)
    assert plain.sections == []
    assert filter_corpus([plain]) == []
    assert filter_corpus([plain], require_sections=False) == [plain]


def _light_docs(n: int):
    return [
        Document(
            id=f"d{i:05d}", title="T", body="Alpha beta.", context="c",
            sections=["S"], word_count=2, sentence_count=1,
        )
        for i in range(n)
    ]


def test_split_corpus_exact_sizes_and_disjoint():
    docs = _light_docs(40)
    split = split_corpus(docs, (30, 6, 2), seed=11)
    assert (len(split.train), len(split.validation), len(split.evaluation)) == (30, 6, 2)
    ids = [d.id for bucket in split.as_mapping().values() for d in bucket]
    assert len(set(ids)) == len(ids) == 38


def test_split_corpus_is_seed_deterministic():
    docs = _light_docs(40)
    a = split_corpus(docs, (20, 10, 5), seed=4)
    b = split_corpus(docs, (20, 10, 5), seed=4)
    c = split_corpus(docs, (20, 10, 5), seed=5)
    assert [d.id for d in a.train] == [d.id for d in b.train]
    assert [d.id for d in a.train] != [d.id for d in c.train]


def test_split_corpus_shortfall_raises():
    with pytest.raises(ValidationError):
        split_corpus(_light_docs(10), (8, 2, 1), seed=0)


def test_corpus_split_mapping_keys():
    split = split_corpus(_light_docs(6), (3, 2, 1), seed=0)
    assert list(split.as_mapping()) == ["train", "validation", "evaluation"]
    assert isinstance(split, CorpusSplit)
