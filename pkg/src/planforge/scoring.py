"""Score intermediate-step candidates and select the best one per document.

A candidate is scored on two axes and the axes are multiplied:

* length_score in [0,1]: how close the candidate's word and sentence counts
  are to per-kind target ratios of the source article, through a clamped
  sinusoidal bump f(r) = sin(pi/2 * u) with u = clamp(min(r/r*, 2 - r/r*), 0, 1).
  f peaks at exactly 1.0 when r equals the target r*, falls to 0 at r = 0
  and r >= 2 r*, and is strictly increasing below the target.
* entailment_score in [0,2]: forward support (article entails candidate)
  plus backward coverage (candidate covers article), each in [0,1].

quality = length_score * entailment_score. The selected candidate is the
quality argmax; exact ties go to the lowest index so selection is
deterministic.

The default entailment scorer is lexical: clipped unigram containment of
the hypothesis in the premise over lowercase alphanumeric tokens. A
stopword set can exclude function words; it is empty by default. An
LLM-backed scorer with the same interface is provided for setups that can
afford judged scoring.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol

from .corpus import Document, count_sentences, count_words
from .errors import ScoringError, TransportError, ValidationError
from .llmclient import CompletionRequest, LLMClient
from .rouge import rouge_tokenize
from .synthesis import CandidateSet, StepKind

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LengthParams:
    """Target candidate/source count ratios for one step kind."""

    target_word_ratio: float
    target_sentence_ratio: float

    def __post_init__(self) -> None:
        for name, value in (
            ("target_word_ratio", self.target_word_ratio),
            ("target_sentence_ratio", self.target_sentence_ratio),
        ):
            if not 0 < value <= 1:
                raise ValidationError(f"{name} must be in (0, 1], got {value}")


DEFAULT_LENGTH_PARAMS: dict[StepKind, LengthParams] = {
    StepKind.SUMMARY: LengthParams(0.10, 0.10),
    StepKind.OUTLINE: LengthParams(0.05, 0.05),
    StepKind.KEY_INFORMATION: LengthParams(0.08, 0.08),
}


@dataclass(frozen=True)
class CandidateScore:
    """Full score decomposition for one candidate."""

    word_ratio: float
    sentence_ratio: float
    length_score: float
    entailment_forward: float
    entailment_backward: float
    entailment_score: float
    quality: float

    def as_dict(self) -> dict[str, float]:
        return {
            "word_ratio": self.word_ratio,
            "sentence_ratio": self.sentence_ratio,
            "length_score": self.length_score,
            "ent_fwd": self.entailment_forward,
            "ent_bwd": self.entailment_backward,
            "quality": self.quality,
        }


ZERO_SCORE = CandidateScore(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass
class IntermediateStep:
    """The selected candidate for one (document, kind) with its score table."""

    doc_id: str
    kind: StepKind
    text: str
    chosen_index: int
    score: CandidateScore
    all_scores: list[CandidateScore] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.all_scores:
            best = max(s.quality for s in self.all_scores)
            chosen = self.all_scores[self.chosen_index]
            first_best = next(
                i for i, s in enumerate(self.all_scores) if s.quality == best
            )
            if chosen.quality != best or self.chosen_index != first_best:
                raise ValidationError(
                    f"chosen_index {self.chosen_index} is not the first "
                    f"quality argmax for {self.doc_id!r}/{self.kind.value}"
                )


class EntailmentScorer(Protocol):
    """Directional entailment estimate in [0,1]."""

    def score(self, premise: str, hypothesis: str) -> float:
        """How strongly the premise supports the hypothesis."""
        ...


class LexicalEntailmentScorer:
    """Clipped unigram containment: supported hypothesis tokens / all of them.

    Tokens are lowercase alphanumeric runs. A non-empty stopword set removes
    those tokens from both sides before counting; the default set is empty so
    every token counts.
    """

    def __init__(self, stopwords: frozenset[str] = frozenset()) -> None:
        self.stopwords = stopwords

    def _tokens(self, text: str) -> list[str]:
        tokens = rouge_tokenize(text)
        if self.stopwords:
            tokens = [t for t in tokens if t not in self.stopwords]
        return tokens

    def score(self, premise: str, hypothesis: str) -> float:
        hyp = self._tokens(hypothesis)
        if not hyp:
            return 0.0
        prem = Counter(self._tokens(premise))
        supported = sum((Counter(hyp) & prem).values())
        return supported / len(hyp)


_JUDGE_PROMPT = (
    "You are checking whether a passage is fully supported by a source text.\n"
    "Reply with a single number between 0 and 1, where 1 means every claim in\n"
    "the passage is entailed by the source and 0 means none are.\n\n"
    "### Source\n{premise}\n\n### Passage\n{hypothesis}\n\n### Support score\n"
)


class LLMEntailmentScorer:
    """Entailment judged by a completion model returning a number in [0,1]."""

    def __init__(
        self,
        client: LLMClient,
        model_id: str,
        max_output_tokens: int = 8,
        seed: int = 0,
    ) -> None:
        self._client = client
        self._model_id = model_id
        self._max_output_tokens = max_output_tokens
        self._seed = seed

    def score(self, premise: str, hypothesis: str) -> float:
        request = CompletionRequest(
            model_id=self._model_id,
            prompt=_JUDGE_PROMPT.format(premise=premise, hypothesis=hypothesis),
            max_output_tokens=self._max_output_tokens,
            temperature=0.0,
            seed=self._seed,
        )
        response = self._client.complete(request)
        try:
            value = float(response.text.strip().split()[0])
        except (ValueError, IndexError) as exc:
            raise ScoringError(
                f"judge returned a non-numeric score: {response.text!r}"
            ) from exc
        if not 0.0 <= value <= 1.0:
            raise ScoringError(f"judge score {value} outside [0, 1]")
        return value


def ratios(candidate: str, source: Document) -> tuple[float, float]:
    """Candidate/source ratios using the shared word and sentence counters."""
    if source.word_count <= 0 or source.sentence_count <= 0:
        raise ValidationError(
            f"document {source.id!r} has degenerate counts "
            f"({source.word_count} words, {source.sentence_count} sentences)"
        )
    return (
        count_words(candidate) / source.word_count,
        count_sentences(candidate) / source.sentence_count,
    )


def _bump(ratio: float, target: float) -> float:
    if not math.isfinite(ratio):
        raise ValidationError(f"ratio must be finite, got {ratio}")
    if ratio < 0:
        raise ValidationError(f"ratio must be >= 0, got {ratio}")
    u = min(ratio / target, 2.0 - ratio / target)
    u = max(0.0, min(1.0, u))
    return math.sin(math.pi / 2.0 * u)


def length_score(
    word_ratio: float, sentence_ratio: float, params: LengthParams
) -> float:
    """Product of the sinusoidal bump over both ratio axes."""
    return _bump(word_ratio, params.target_word_ratio) * _bump(
        sentence_ratio, params.target_sentence_ratio
    )


def entailment_score(
    article: str,
    candidate: str,
    scorer: EntailmentScorer,
    doc_id: str | None = None,
) -> tuple[float, float, float]:
    """(forward, backward, sum): article->candidate support, candidate->article coverage."""
    if not article.strip() or not candidate.strip():
        raise ValidationError("entailment needs non-empty article and candidate")
    forward = _scored_direction(scorer, article, candidate, "forward", doc_id)
    backward = _scored_direction(scorer, candidate, article, "backward", doc_id)
    return forward, backward, forward + backward


def _scored_direction(
    scorer: EntailmentScorer,
    premise: str,
    hypothesis: str,
    direction: str,
    doc_id: str | None,
) -> float:
    try:
        value = scorer.score(premise, hypothesis)
    except (ScoringError, TransportError) as exc:
        raise ScoringError(
            f"{direction} entailment failed: {exc}", direction=direction, doc_id=doc_id
        ) from exc
    if not 0.0 <= value <= 1.0:
        raise ScoringError(
            f"{direction} entailment {value} outside [0, 1]",
            direction=direction,
            doc_id=doc_id,
        )
    return value


def score_candidate(
    candidate: str,
    source: Document,
    params: LengthParams,
    scorer: EntailmentScorer,
) -> CandidateScore:
    """Score one candidate; empty candidates score zero everywhere."""
    if not candidate.strip():
        return ZERO_SCORE
    word_ratio, sentence_ratio = ratios(candidate, source)
    length = length_score(word_ratio, sentence_ratio, params)
    forward, backward, total = entailment_score(
        source.body, candidate, scorer, doc_id=source.id
    )
    return CandidateScore(
        word_ratio=word_ratio,
        sentence_ratio=sentence_ratio,
        length_score=length,
        entailment_forward=forward,
        entailment_backward=backward,
        entailment_score=total,
        quality=length * total,
    )


def select_best(
    candidates: CandidateSet,
    source: Document,
    params: LengthParams,
    scorer: EntailmentScorer,
) -> IntermediateStep:
    """Score every candidate and pick the quality argmax (ties: lowest index)."""
    if all(not c.strip() for c in candidates.candidates):
        raise ValidationError(
            f"all candidates empty for {candidates.doc_id!r}/{candidates.kind.value}"
        )
    scores = [
        score_candidate(c, source, params, scorer) for c in candidates.candidates
    ]
    best_index = 0
    for i, score in enumerate(scores):
        if score.quality > scores[best_index].quality:
            best_index = i
    return IntermediateStep(
        doc_id=candidates.doc_id,
        kind=candidates.kind,
        text=candidates.candidates[best_index],
        chosen_index=best_index,
        score=scores[best_index],
        all_scores=scores,
    )


def write_score_table(path: str | Path, steps: Iterable[IntermediateStep]) -> None:
    """Persist every candidate's score decomposition, one record per candidate."""
    with open(path, "w", encoding="utf-8") as fh:
        for step in steps:
            for index, score in enumerate(step.all_scores):
                record = {
                    "doc_id": step.doc_id,
                    "kind": step.kind.value,
                    "index": index,
                    **score.as_dict(),
                }
                fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
                fh.write("\n")


def write_steps(path: str | Path, steps: Iterable[IntermediateStep]) -> None:
    """Persist selected steps as {doc_id, kind, chosen_index, text, score} records."""
    with open(path, "w", encoding="utf-8") as fh:
        for step in steps:
            record = {
                "doc_id": step.doc_id,
                "kind": step.kind.value,
                "chosen_index": step.chosen_index,
                "text": step.text,
                "score": step.score.as_dict(),
            }
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def read_steps(path: str | Path) -> dict[str, dict[StepKind, IntermediateStep]]:
    """Load selected steps grouped by document id.

    The full per-candidate table stays in the score-table file; read-back
    steps carry only their own score.
    """
    store: dict[str, dict[StepKind, IntermediateStep]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            raw = record["score"]
            score = CandidateScore(
                word_ratio=float(raw["word_ratio"]),
                sentence_ratio=float(raw["sentence_ratio"]),
                length_score=float(raw["length_score"]),
                entailment_forward=float(raw["ent_fwd"]),
                entailment_backward=float(raw["ent_bwd"]),
                entailment_score=float(raw["ent_fwd"]) + float(raw["ent_bwd"]),
                quality=float(raw["quality"]),
            )
            step = IntermediateStep(
                doc_id=str(record["doc_id"]),
                kind=StepKind(record["kind"]),
                text=str(record["text"]),
                chosen_index=int(record["chosen_index"]),
                score=score,
            )
            store.setdefault(step.doc_id, {})[step.kind] = step
    return store
