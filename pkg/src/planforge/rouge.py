"""ROUGE-1/2/L/Lsum with precision, recall and F1, implemented from scratch.

Tokenization is frozen: lowercase, split on non-alphanumeric runs, keep
digits, drop empties. Stemming and stopword removal exist behind flags and
are off by default, so scores are reproducible without preprocessing
footnotes.

ROUGE-Lsum follows the union-LCS definition: for every reference sentence,
union the LCS token positions against each candidate sentence, then count
the union hits clipped by candidate token multiplicities. Where several
longest common subsequences exist, the canonical one is pinned: backtracking
runs from the end of both sequences, takes every match it sees, and on a
tie between skip directions drops the reference-side token. Changing that
rule changes Lsum on repeated-token inputs, so it is part of the contract.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import split_sentences
from .errors import ValidationError

_TOKEN = re.compile(r"[a-z0-9]+")

# Small suffix stripper used only behind the stem flag. Longest suffix wins;
# the stem must keep at least 3 characters.
_STEM_SUFFIXES = ("ing", "ed", "es", "s")


@dataclass(frozen=True)
class MetricScore:
    """Precision/recall/F1 triple for one ROUGE variant."""

    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class RougeScores:
    """All four ROUGE variants for one pair or one corpus aggregate."""

    rouge1: MetricScore
    rouge2: MetricScore
    rouge_l: MetricScore
    rouge_lsum: MetricScore

    def as_flat_dict(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for name in ("rouge1", "rouge2", "rouge_l", "rouge_lsum"):
            metric: MetricScore = getattr(self, name)
            out[f"{name}_precision"] = metric.precision
            out[f"{name}_recall"] = metric.recall
            out[f"{name}_f1"] = metric.f1
        return out


def rouge_tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric characters, keeping digits."""
    return _TOKEN.findall(text.lower())


def _light_stem(token: str) -> str:
    for suffix in _STEM_SUFFIXES:
        if token.endswith(suffix) and len(token) - len(suffix) >= 3:
            return token[: len(token) - len(suffix)]
    return token


def _prepare(text: str, stem: bool, stopwords: frozenset[str]) -> list[str]:
    tokens = rouge_tokenize(text)
    if stopwords:
        tokens = [t for t in tokens if t not in stopwords]
    if stem:
        tokens = [_light_stem(t) for t in tokens]
    return tokens


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(
    candidate: str,
    reference: str,
    n: int,
    *,
    stem: bool = False,
    stopwords: frozenset[str] = frozenset(),
) -> MetricScore:
    """Clipped n-gram multiset overlap between candidate and reference."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    cand = _ngrams(_prepare(candidate, stem, stopwords), n)
    ref = _ngrams(_prepare(reference, stem, stopwords), n)
    total_cand = sum(cand.values())
    total_ref = sum(ref.values())
    if total_cand == 0 or total_ref == 0:
        return MetricScore(0.0, 0.0, 0.0)
    overlap = sum((cand & ref).values())
    precision = overlap / total_cand
    recall = overlap / total_ref
    return MetricScore(precision, recall, _f1(precision, recall))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length in O(|a|*|b|) time, O(min) memory."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, 1):
            if x == y:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def _lcs_positions(a: Sequence[str], b: Sequence[str]) -> set[int]:
    """Positions in ``a`` of the canonical LCS against ``b``.

    Canonical rule: backtrack from the end, take every match, and on a tie
    between skip directions drop from ``a``.
    """
    if not a or not b:
        return set()
    m, n = len(a), len(b)
    table = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(1, m + 1):
        row = table[i]
        prev_row = table[i - 1]
        ai = a[i - 1]
        for j in range(1, n + 1):
            if ai == b[j - 1]:
                row[j] = prev_row[j - 1] + 1
            else:
                row[j] = max(prev_row[j], row[j - 1])
    positions: set[int] = set()
    i, j = m, n
    while i > 0 and j > 0:
        if a[i - 1] == b[j - 1]:
            positions.add(i - 1)
            i -= 1
            j -= 1
        elif table[i - 1][j] >= table[i][j - 1]:
            i -= 1
        else:
            j -= 1
    return positions


def rouge_l(
    candidate: str,
    reference: str,
    *,
    stem: bool = False,
    stopwords: frozenset[str] = frozenset(),
) -> MetricScore:
    """Whole-text LCS score: P = LCS/|candidate|, R = LCS/|reference|."""
    cand = _prepare(candidate, stem, stopwords)
    ref = _prepare(reference, stem, stopwords)
    if not cand or not ref:
        return MetricScore(0.0, 0.0, 0.0)
    lcs = lcs_length(cand, ref)
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return MetricScore(precision, recall, _f1(precision, recall))


def _sentence_tokens(
    text: str, stem: bool, stopwords: frozenset[str]
) -> list[list[str]]:
    sents = [_prepare(s, stem, stopwords) for s in split_sentences(text)]
    return [s for s in sents if s]


def _union_hits(ref_sents: list[list[str]], cand_sents: list[list[str]]) -> int:
    cand_counts: Counter = Counter()
    for sent in cand_sents:
        cand_counts.update(sent)
    ref_counts: Counter = Counter()
    for sent in ref_sents:
        ref_counts.update(sent)
    hits = 0
    for ref in ref_sents:
        covered: set[int] = set()
        for cand in cand_sents:
            covered |= _lcs_positions(ref, cand)
        for i in sorted(covered):
            token = ref[i]
            if cand_counts[token] > 0 and ref_counts[token] > 0:
                hits += 1
                cand_counts[token] -= 1
                ref_counts[token] -= 1
    return hits


def rouge_lsum(
    candidate: str,
    reference: str,
    *,
    stem: bool = False,
    stopwords: frozenset[str] = frozenset(),
) -> MetricScore:
    """Sentence-level union-LCS score over the shared sentence segmenter."""
    cand_sents = _sentence_tokens(candidate, stem, stopwords)
    ref_sents = _sentence_tokens(reference, stem, stopwords)
    total_cand = sum(len(s) for s in cand_sents)
    total_ref = sum(len(s) for s in ref_sents)
    if total_cand == 0 or total_ref == 0:
        return MetricScore(0.0, 0.0, 0.0)
    hits = _union_hits(ref_sents, cand_sents)
    precision = hits / total_cand
    recall = hits / total_ref
    return MetricScore(precision, recall, _f1(precision, recall))


def score_pair(
    candidate: str,
    reference: str,
    *,
    stem: bool = False,
    stopwords: frozenset[str] = frozenset(),
) -> RougeScores:
    """All four ROUGE variants for one candidate/reference pair."""
    return RougeScores(
        rouge1=rouge_n(candidate, reference, 1, stem=stem, stopwords=stopwords),
        rouge2=rouge_n(candidate, reference, 2, stem=stem, stopwords=stopwords),
        rouge_l=rouge_l(candidate, reference, stem=stem, stopwords=stopwords),
        rouge_lsum=rouge_lsum(candidate, reference, stem=stem, stopwords=stopwords),
    )


def corpus_rouge(
    pairs: Iterable[tuple[str, str]],
    *,
    stem: bool = False,
    stopwords: frozenset[str] = frozenset(),
) -> RougeScores:
    """Arithmetic mean of per-pair scores across a corpus."""
    scored = [
        score_pair(c, r, stem=stem, stopwords=stopwords) for c, r in pairs
    ]
    if not scored:
        raise ValidationError("corpus_rouge needs at least one pair")

    def mean_metric(name: str) -> MetricScore:
        metrics = [getattr(s, name) for s in scored]
        k = len(metrics)
        return MetricScore(
            precision=sum(m.precision for m in metrics) / k,
            recall=sum(m.recall for m in metrics) / k,
            f1=sum(m.f1 for m in metrics) / k,
        )

    return RougeScores(
        rouge1=mean_metric("rouge1"),
        rouge2=mean_metric("rouge2"),
        rouge_l=mean_metric("rouge_l"),
        rouge_lsum=mean_metric("rouge_lsum"),
    )
