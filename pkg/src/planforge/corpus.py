"""Corpus ingestion: parse, count, filter and split long-form articles.

Records are newline-delimited JSON objects with fields
``{id?, title?, context?, body, sections?}``; every record needs a body and
either a context or a title. Title-only records get their context from
:func:`make_topic_context`.

The counting rules are deliberately simple and frozen so that length ratios
computed downstream are stable across platforms:

* a word is a maximal run of non-whitespace after Unicode NFC normalization;
* a sentence ends at ``.``, ``!`` or ``?`` followed by whitespace and an
  uppercase letter or digit, unless the token ending in that punctuation is
  on the abbreviation stop-list; a newline always ends a sentence.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .errors import ParseError, ValidationError

TOPIC_CONTEXT_TEMPLATE = (
    "Generate a comprehensive Wikipedia page about the specified topic.\nTopic: {topic}"
)

# Frozen stop-list for sentence segmentation. Tokens are compared lowercase,
# including their trailing period.
ABBREVIATIONS = frozenset(
    {
        "al.",
        "approx.",
        "cf.",
        "co.",
        "dr.",
        "e.g.",
        "eq.",
        "etc.",
        "fig.",
        "figs.",
        "i.e.",
        "inc.",
        "jr.",
        "ltd.",
        "mr.",
        "mrs.",
        "ms.",
        "no.",
        "prof.",
        "sec.",
        "sr.",
        "st.",
        "u.k.",
        "u.n.",
        "u.s.",
        "vol.",
        "vs.",
    }
)

_SENTENCE_END = re.compile(r"[.!?]+")
_MD_HEADING = re.compile(r"^(#{1,6})\s+(\S.*?)\s*$")
_WIKI_HEADING = re.compile(r"^(={2,6})\s*([^=].*?)\s*\1$")
# Lowercase words allowed inside a title-case heading line.
_SMALL_WORDS = frozenset("a an and as at but by for in of on or the to".split())


@dataclass
class Document:
    """One article with its input context and structural metadata."""

    id: str
    title: str
    body: str
    context: str
    sections: list[str]
    word_count: int
    sentence_count: int

    def __post_init__(self) -> None:
        if not self.body.strip():
            raise ValidationError(f"document {self.id!r} has an empty body")
        if not self.context.strip():
            raise ValidationError(f"document {self.id!r} has an empty context")


@dataclass
class CorpusSplit:
    """Disjoint train/validation/evaluation document lists."""

    train: list[Document]
    validation: list[Document]
    evaluation: list[Document]
    seed: int

    def as_mapping(self) -> dict[str, list[Document]]:
        return {
            "train": self.train,
            "validation": self.validation,
            "evaluation": self.evaluation,
        }


def count_words(text: str) -> int:
    """Count maximal non-whitespace runs after NFC normalization."""
    return len(unicodedata.normalize("NFC", text).split())


def _line_sentence_spans(line: str, base: int) -> list[tuple[int, int]]:
    spans: list[tuple[int, int]] = []
    start = 0
    for match in _SENTENCE_END.finditer(line):
        end = match.end()
        j = end
        while j < len(line) and line[j].isspace():
            j += 1
        if j == end or j >= len(line):
            continue  # no whitespace after the punctuation, or line ends here
        nxt = line[j]
        if not (nxt.isupper() or nxt.isdigit()):
            continue
        head = line[:end].split()
        if head and head[-1].lower() in ABBREVIATIONS:
            continue
        if line[start:end].strip():
            spans.append((base + start, base + end))
        start = j
    if line[start:].strip():
        spans.append((base + start, base + len(line)))
    return spans


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """Return (start, end) offsets of each sentence under the frozen rules."""
    spans: list[tuple[int, int]] = []
    pos = 0
    for line in text.split("\n"):
        spans.extend(_line_sentence_spans(line, pos))
        pos += len(line) + 1
    return spans


def split_sentences(text: str) -> list[str]:
    return [text[a:b].strip() for a, b in sentence_spans(text)]


def count_sentences(text: str) -> int:
    return len(sentence_spans(text))


def estimate_tokens(text: str) -> int:
    """Approximate token count as ceil(len/4); a deliberately coarse, stable heuristic."""
    return -(-len(text) // 4)


def truncate_at_sentence(
    text: str,
    max_tokens: int,
    estimator: Callable[[str], int] = estimate_tokens,
) -> tuple[str, bool]:
    """Tail-truncate ``text`` to the last full sentence within ``max_tokens``.

    Returns ``(text, False)`` when no truncation was needed. If not even the
    first sentence fits, falls back to a word-boundary cut so the budget is
    still honored.
    """
    if max_tokens <= 0:
        return "", True
    if estimator(text) <= max_tokens:
        return text, False
    best_end = 0
    for _, end in sentence_spans(text):
        if estimator(text[:end]) <= max_tokens:
            best_end = end
        else:
            break
    if best_end > 0:
        return text[:best_end].rstrip(), True
    # No sentence boundary fits: binary-search the longest prefix, then back
    # off to the previous word boundary.
    lo, hi = 0, len(text)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if estimator(text[:mid]) <= max_tokens:
            lo = mid
        else:
            hi = mid - 1
    prefix = text[:lo]
    if " " in prefix:
        prefix = prefix.rsplit(" ", 1)[0]
    return prefix.rstrip(), True


def detect_sections(body: str, heading_pattern: str | None = None) -> list[str]:
    """Find section titles in ``body``.

    Built-in rules: markdown ``#`` headings, ``== wiki ==`` headings, and a
    short title-case line directly followed by a blank line. A custom
    ``heading_pattern`` regex replaces the built-in rules; its first group
    (or whole match) is the title.
    """
    lines = body.split("\n")
    sections: list[str] = []
    for i, raw in enumerate(lines):
        line = raw.strip()
        if not line:
            continue
        if heading_pattern is not None:
            m = re.match(heading_pattern, line)
            if m:
                sections.append((m.group(1) if m.groups() else m.group(0)).strip())
            continue
        m = _MD_HEADING.match(line)
        if m:
            sections.append(m.group(2))
            continue
        m = _WIKI_HEADING.match(line)
        if m:
            sections.append(m.group(2))
            continue
        if _is_title_case_heading(line) and i + 1 < len(lines) and not lines[i + 1].strip():
            sections.append(line)
    return sections


def _is_title_case_heading(line: str) -> bool:
    if len(line) > 60 or line[-1] in ".!?:;,":
        return False
    words = line.split()
    if not 1 <= len(words) <= 8:
        return False
    first = words[0]
    if not (first[0].isupper() or first[0].isdigit()):
        return False
    for w in words:
        if w[0].isupper() or w[0].isdigit() or w.lower() in _SMALL_WORDS:
            continue
        return False
    return True


def make_topic_context(topic: str) -> str:
    """Render the two-line topic prompt used as input context for topic records."""
    topic = topic.strip()
    if not topic:
        raise ValidationError("topic must be non-empty")
    return TOPIC_CONTEXT_TEMPLATE.format(topic=topic)


def _derive_id(title: str, body: str) -> str:
    digest = hashlib.sha256(f"{title}\x00{body}".encode("utf-8")).hexdigest()
    return f"doc-{digest[:16]}"


def parse_paired_record(
    raw_record: str | Mapping[str, object],
    heading_pattern: str | None = None,
) -> Document:
    """Parse one corpus record into a :class:`Document` with derived counts.

    ``raw_record`` is a JSON line or an already-decoded mapping. Records
    without a context get one built from their title.
    """
    if isinstance(raw_record, str):
        try:
            record = json.loads(raw_record)
        except json.JSONDecodeError as exc:
            raise ParseError(f"record is not valid JSON: {exc}") from exc
        if not isinstance(record, dict):
            raise ParseError("record must be a JSON object")
    else:
        record = dict(raw_record)

    if "body" not in record or record["body"] is None:
        raise ParseError("record missing field: body")
    body = str(record["body"]).strip()
    if not body:
        raise ValidationError("record has an empty body")

    title = str(record.get("title") or "").strip()
    context_raw = record.get("context")
    context = str(context_raw).strip() if context_raw is not None else ""
    if not context:
        if not title:
            raise ParseError("record missing field: context (or title to derive one)")
        context = make_topic_context(title)

    sections_raw = record.get("sections")
    if sections_raw is not None:
        sections = [str(s) for s in sections_raw]
    else:
        sections = detect_sections(body, heading_pattern)

    doc_id = str(record.get("id") or "").strip() or _derive_id(title, body)
    return Document(
        id=doc_id,
        title=title,
        body=body,
        context=context,
        sections=sections,
        word_count=count_words(body),
        sentence_count=count_sentences(body),
    )


def document_to_record(doc: Document) -> dict[str, object]:
    return {
        "id": doc.id,
        "title": doc.title,
        "context": doc.context,
        "body": doc.body,
        "sections": list(doc.sections),
    }


def read_documents(path: str | Path, heading_pattern: str | None = None) -> list[Document]:
    """Read a newline-delimited record file, enforcing id uniqueness."""
    docs: list[Document] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                doc = parse_paired_record(line, heading_pattern)
            except (ParseError, ValidationError) as exc:
                raise type(exc)(f"{path}:{lineno}: {exc}") from exc
            if doc.id in seen:
                raise ValidationError(f"{path}:{lineno}: duplicate document id {doc.id!r}")
            seen.add(doc.id)
            docs.append(doc)
    return docs


def write_documents(path: str | Path, docs: Iterable[Document]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(document_to_record(doc), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def filter_corpus(
    docs: list[Document],
    min_words: int = 1000,
    require_sections: bool = True,
) -> list[Document]:
    """Keep documents with ``word_count >= min_words`` (boundary retained) and,
    when ``require_sections``, a non-empty section list. Order is preserved."""
    return [
        d
        for d in docs
        if d.word_count >= min_words and (not require_sections or d.sections)
    ]


def split_corpus(
    docs: list[Document],
    sizes: tuple[int, int, int],
    seed: int,
) -> CorpusSplit:
    """Sample disjoint train/validation/evaluation splits without replacement.

    Deterministic for a given seed; raises when the corpus is too small,
    reporting the shortfall.
    """
    n_train, n_val, n_eval = sizes
    for name, n in (("train", n_train), ("validation", n_val), ("evaluation", n_eval)):
        if n < 0:
            raise ValidationError(f"{name} size must be non-negative, got {n}")
    total = n_train + n_val + n_eval
    if total > len(docs):
        raise ValidationError(
            f"split needs {total} documents but the corpus has {len(docs)} "
            f"(short by {total - len(docs)})"
        )
    rng = random.Random(seed)
    order = list(range(len(docs)))
    rng.shuffle(order)
    picked = [docs[i] for i in order[:total]]
    return CorpusSplit(
        train=picked[:n_train],
        validation=picked[n_train : n_train + n_val],
        evaluation=picked[n_train + n_val :],
        seed=seed,
    )
