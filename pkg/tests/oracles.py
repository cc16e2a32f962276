"""Independent brute-force reference implementations used only by tests.

Nothing here imports the package's metric code paths; these are the
ground-truth implementations the real ones are compared against. Keep them
slow and obvious.
"""

from __future__ import annotations

import math
import re
import unicodedata


def is_subsequence(sub: list, seq: list) -> bool:
    it = iter(seq)
    return all(any(x == y for y in it) for x in sub)


def _exhaustive_lcs(short: list, long: list) -> int:
    best = 0
    for mask in range(1 << len(short)):
        picked = [short[i] for i in range(len(short)) if mask >> i & 1]
        if len(picked) > best and is_subsequence(picked, long):
            best = len(picked)
    return best


def oracle_lcs_length(a: list, b: list) -> int:
    """LCS length by exhaustive subsequence enumeration when small, else by
    memoized recursion (still independent of the iterative table code). On
    the exhaustive path both answers are computed and must agree."""
    short, long = (a, b) if len(a) <= len(b) else (b, a)
    exhaustive = _exhaustive_lcs(short, long) if len(short) <= 10 else None
    memo: dict[tuple[int, int], int] = {}

    def rec(i: int, j: int) -> int:
        if i == 0 or j == 0:
            return 0
        key = (i, j)
        if key not in memo:
            if a[i - 1] == b[j - 1]:
                memo[key] = rec(i - 1, j - 1) + 1
            else:
                memo[key] = max(rec(i - 1, j), rec(i, j - 1))
        return memo[key]

    import sys

    old = sys.getrecursionlimit()
    sys.setrecursionlimit(10000)
    try:
        answer = rec(len(a), len(b))
    finally:
        sys.setrecursionlimit(old)
    if exhaustive is not None:
        assert answer == exhaustive, "oracle self-check failed"
    return answer


def oracle_tokenize(text: str) -> list[str]:
    return re.findall(r"[a-z0-9]+", text.lower())


def oracle_ngrams(tokens: list[str], n: int) -> dict[tuple, int]:
    counts: dict[tuple, int] = {}
    for i in range(len(tokens) - n + 1):
        gram = tuple(tokens[i : i + n])
        counts[gram] = counts.get(gram, 0) + 1
    return counts


def oracle_f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def oracle_rouge_n(cand: list[str], ref: list[str], n: int) -> tuple[float, float, float]:
    cgrams = oracle_ngrams(cand, n)
    rgrams = oracle_ngrams(ref, n)
    total_c = sum(cgrams.values())
    total_r = sum(rgrams.values())
    if total_c == 0 or total_r == 0:
        return 0.0, 0.0, 0.0
    overlap = 0
    for gram, count in cgrams.items():
        overlap += min(count, rgrams.get(gram, 0))
    p = overlap / total_c
    r = overlap / total_r
    return p, r, oracle_f1(p, r)


def oracle_rouge_l(cand: list[str], ref: list[str]) -> tuple[float, float, float]:
    if not cand or not ref:
        return 0.0, 0.0, 0.0
    lcs = oracle_lcs_length(cand, ref)
    p = lcs / len(cand)
    r = lcs / len(ref)
    return p, r, oracle_f1(p, r)


def oracle_canonical_lcs_positions(a: list[str], b: list[str]) -> set[int]:
    """Positions in `a` of the canonical LCS, stated declaratively: walk back
    from the end, take every match, and on a tie between dropping from `a`
    or from `b`, drop from `a`."""
    memo: dict[tuple[int, int], int] = {}

    def length(i: int, j: int) -> int:
        if i == 0 or j == 0:
            return 0
        key = (i, j)
        if key not in memo:
            if a[i - 1] == b[j - 1]:
                memo[key] = length(i - 1, j - 1) + 1
            else:
                memo[key] = max(length(i - 1, j), length(i, j - 1))
        return memo[key]

    positions: set[int] = set()
    i, j = len(a), len(b)
    while i > 0 and j > 0:
        if a[i - 1] == b[j - 1]:
            positions.add(i - 1)
            i -= 1
            j -= 1
        elif length(i - 1, j) >= length(i, j - 1):
            i -= 1
        else:
            j -= 1
    return positions


def oracle_union_hits(ref_sents: list[list[str]], cand_sents: list[list[str]]) -> int:
    cand_counts: dict[str, int] = {}
    for sent in cand_sents:
        for token in sent:
            cand_counts[token] = cand_counts.get(token, 0) + 1
    ref_counts: dict[str, int] = {}
    for sent in ref_sents:
        for token in sent:
            ref_counts[token] = ref_counts.get(token, 0) + 1
    hits = 0
    for ref in ref_sents:
        union: set[int] = set()
        for cand in cand_sents:
            union |= oracle_canonical_lcs_positions(ref, cand)
        for i in sorted(union):
            token = ref[i]
            if cand_counts.get(token, 0) > 0 and ref_counts.get(token, 0) > 0:
                hits += 1
                cand_counts[token] -= 1
                ref_counts[token] -= 1
    return hits


def oracle_rouge_lsum(
    cand_sents: list[list[str]], ref_sents: list[list[str]]
) -> tuple[float, float, float]:
    cand_sents = [s for s in cand_sents if s]
    ref_sents = [s for s in ref_sents if s]
    total_c = sum(len(s) for s in cand_sents)
    total_r = sum(len(s) for s in ref_sents)
    if total_c == 0 or total_r == 0:
        return 0.0, 0.0, 0.0
    hits = oracle_union_hits(ref_sents, cand_sents)
    p = hits / total_c
    r = hits / total_r
    return p, r, oracle_f1(p, r)


# --- Independent re-scoring chain for candidate selection -----------------


def oracle_word_count(text: str) -> int:
    return len(unicodedata.normalize("NFC", text).split())


def oracle_sentence_count(text: str) -> int:
    """Sentence count for plain fixture texts: split where a terminator is
    followed by whitespace and a capital or digit. Valid only for texts
    without abbreviation tokens; fixtures are built that way."""
    count = 0
    for line in text.split("\n"):
        segments = re.split(r"(?<=[.!?])\s+(?=[A-Z0-9])", line)
        count += sum(1 for s in segments if s.strip())
    return count


def oracle_bump(ratio: float, target: float) -> float:
    u = min(ratio / target, 2.0 - ratio / target)
    u = min(1.0, max(0.0, u))
    return math.sin(math.pi / 2.0 * u)


def oracle_containment(premise: str, hypothesis: str) -> float:
    hyp = oracle_tokenize(hypothesis)
    if not hyp:
        return 0.0
    available: dict[str, int] = {}
    for token in oracle_tokenize(premise):
        available[token] = available.get(token, 0) + 1
    supported = 0
    for token in hyp:
        if available.get(token, 0) > 0:
            supported += 1
            available[token] -= 1
    return supported / len(hyp)


def oracle_quality(
    candidate: str,
    source_body: str,
    source_words: int,
    source_sentences: int,
    target_word_ratio: float,
    target_sentence_ratio: float,
) -> float:
    if not candidate.strip():
        return 0.0
    word_ratio = oracle_word_count(candidate) / source_words
    sentence_ratio = oracle_sentence_count(candidate) / source_sentences
    length = oracle_bump(word_ratio, target_word_ratio) * oracle_bump(
        sentence_ratio, target_sentence_ratio
    )
    forward = oracle_containment(source_body, candidate)
    backward = oracle_containment(candidate, source_body)
    return length * (forward + backward)


def oracle_argmax(qualities: list[float]) -> int:
    best = 0
    for i in range(1, len(qualities)):
        if qualities[i] > qualities[best]:
            best = i
    return best
