"""Generate intermediate-step candidates (summary, outline, key information).

Each document gets K sampled completions per step kind, requested through
the cached client so reruns are free and replayable. Prompts are assembled
from fixed few-shot templates; the article portion is tail-truncated at a
sentence boundary when an input limit is set.

Prompt scaffolding uses three-hash sentinels ("### Article", "### Summary",
...) so it can never collide with the two-hash plan sentinels used in
training targets, and candidates can be scanned for scaffold leakage.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .corpus import Document, estimate_tokens, truncate_at_sentence
from .errors import TransportError, ValidationError
from .llmclient import CompletionRequest, FinishReason, LLMClient

logger = logging.getLogger(__name__)

# Fraction of the input limit held back to absorb token-estimator error.
TOKEN_SAFETY_MARGIN = 0.05


class StepKind(str, Enum):
    SUMMARY = "summary"
    OUTLINE = "outline"
    KEY_INFORMATION = "key_information"


# Human-readable sentinel labels used in prompts and plan sections.
STEP_LABELS = {
    StepKind.SUMMARY: "Summary",
    StepKind.OUTLINE: "Outline",
    StepKind.KEY_INFORMATION: "Key Information",
}

EXTRACTION_INSTRUCTIONS = {
    StepKind.SUMMARY: (
        "Read the article below and write a concise summary: one short "
        "paragraph covering what the article says, factual and self-contained."
    ),
    StepKind.OUTLINE: (
        "Read the article below and write a high-level outline: a short list "
        "of the article's sections or movements, one point per line."
    ),
    StepKind.KEY_INFORMATION: (
        "Read the article below and list its key information snippets: the "
        "named entities, numbers, findings and claims a faithful rewrite "
        "must preserve, one snippet per line."
    ),
}

_ARTICLE_SENTINEL = "### Article"


@dataclass
class SamplerParams:
    """Decoding settings for candidate generation; seeds stay per-candidate."""

    model_id: str
    max_output_tokens: int = 1024
    temperature: float = 0.7
    base_seed: int = 0
    input_limit: int | None = None


@dataclass
class CandidateSet:
    """Ordered candidates for one (document, kind); index k is candidate z^k.

    Candidates may be empty strings: a completion that stayed empty after one
    regeneration is recorded as empty and scored zero downstream, so the set
    keeps its promised cardinality.
    """

    doc_id: str
    kind: StepKind
    candidates: list[str]
    k: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if len(self.candidates) != self.k:
            raise ValidationError(
                f"candidate set for {self.doc_id!r}/{self.kind.value} has "
                f"{len(self.candidates)} candidates, expected k={self.k}"
            )


def scaffold_sentinels(kind: StepKind) -> tuple[str, str]:
    """Sentinels that must never leak into a generated candidate."""
    return (_ARTICLE_SENTINEL, f"### {STEP_LABELS[kind]}")


def build_extraction_prompt(
    doc: Document,
    kind: StepKind,
    exemplars: Sequence[tuple[str, str]] = (),
    input_limit: int | None = None,
    estimator: Callable[[str], int] = estimate_tokens,
) -> str:
    """Assemble the few-shot prompt asking for one step kind.

    Args:
        doc: source document whose body is the article to condense.
        kind: which intermediate step to request.
        exemplars: (article, step) pairs shown before the real article.
        input_limit: token budget for the whole prompt; the article is
            tail-truncated at a sentence boundary to fit under it, with a
            5% safety margin for estimator error.
    """
    if not doc.body.strip():
        raise ValidationError(f"document {doc.id!r} has an empty body")
    label = STEP_LABELS[kind]
    parts = [EXTRACTION_INSTRUCTIONS[kind], ""]
    for article, step in exemplars:
        parts.extend([_ARTICLE_SENTINEL, article, "", f"### {label}", step, ""])
    body = doc.body
    if input_limit is not None:
        effective = int(input_limit * (1 - TOKEN_SAFETY_MARGIN))
        scaffold = "\n".join(parts + [_ARTICLE_SENTINEL, "", "", f"### {label}", ""])
        budget = effective - estimator(scaffold)
        if budget <= 0:
            raise ValidationError(
                f"input limit {input_limit} leaves no room for the article "
                f"of document {doc.id!r}"
            )
        body, truncated = truncate_at_sentence(body, budget, estimator)
        if truncated:
            logger.info(
                "truncated article %s to fit extraction prompt budget %d",
                doc.id,
                budget,
            )
        if not body:
            raise ValidationError(
                f"document {doc.id!r} has no sentence fitting budget {budget}"
            )
    parts.extend([_ARTICLE_SENTINEL, body, "", f"### {label}", ""])
    return "\n".join(parts)


def generate_candidates(
    doc: Document,
    kind: StepKind,
    k: int,
    params: SamplerParams,
    client: LLMClient,
    exemplars: Sequence[tuple[str, str]] = (),
) -> CandidateSet:
    """Request k sampled completions with distinct seeds.

    An empty completion is regenerated once under a fresh seed; if it is
    still empty it is recorded as the empty string.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    prompt = build_extraction_prompt(
        doc, kind, exemplars, input_limit=params.input_limit
    )
    candidates: list[str] = []
    for index in range(k):
        text = _one_candidate(doc, prompt, params, client, params.base_seed + index)
        if not text.strip():
            # One regeneration under a seed outside the first-round range.
            text = _one_candidate(
                doc, prompt, params, client, params.base_seed + k + index
            )
            if not text.strip():
                logger.warning(
                    "candidate %d for %s/%s empty after regeneration",
                    index,
                    doc.id,
                    kind.value,
                )
                text = ""
        candidates.append(text)
    return CandidateSet(doc_id=doc.id, kind=kind, candidates=candidates, k=k)


def _one_candidate(
    doc: Document,
    prompt: str,
    params: SamplerParams,
    client: LLMClient,
    seed: int,
) -> str:
    request = CompletionRequest(
        model_id=params.model_id,
        prompt=prompt,
        max_output_tokens=params.max_output_tokens,
        temperature=params.temperature,
        seed=seed,
    )
    try:
        response = client.complete(request)
    except TransportError as exc:
        if exc.doc_id is None:
            exc.doc_id = doc.id
        raise
    if response.finish_reason is FinishReason.ERROR:
        return ""
    return response.text


def write_candidate_sets(path: str | Path, sets: Iterable[CandidateSet]) -> None:
    """Persist candidates as one {doc_id, kind, index, text} record per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for cset in sets:
            for index, text in enumerate(cset.candidates):
                record = {
                    "doc_id": cset.doc_id,
                    "kind": cset.kind.value,
                    "index": index,
                    "text": text,
                }
                fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
                fh.write("\n")


def read_candidate_sets(path: str | Path) -> list[CandidateSet]:
    """Rebuild candidate sets, grouping records by (doc_id, kind) in file order."""
    grouped: dict[tuple[str, str], list[tuple[int, str]]] = {}
    order: list[tuple[str, str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            key = (str(record["doc_id"]), str(record["kind"]))
            if key not in grouped:
                grouped[key] = []
                order.append(key)
            grouped[key].append((int(record["index"]), str(record["text"])))
    sets = []
    for doc_id, kind in order:
        entries = sorted(grouped[(doc_id, kind)])
        indexes = [i for i, _ in entries]
        if indexes != list(range(len(entries))):
            raise ValidationError(
                f"candidate records for {doc_id!r}/{kind} have gaps: {indexes}"
            )
        sets.append(
            CandidateSet(
                doc_id=doc_id,
                kind=StepKind(kind),
                candidates=[t for _, t in entries],
                k=len(entries),
            )
        )
    return sets
