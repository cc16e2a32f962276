"""Side-by-side comparison harness with flip debiasing.

Test and base outputs are paired per item and the side order is flipped by
a seeded fair coin before any rating happens, so a positionally biased
rater cannot systematically favor either system. Verdicts are parsed from a
fixed answer grammar ("<Dimension>: A|B|tie" lines plus a final
"Overall:" line) and immediately unflipped into the test/base frame; every
aggregate below the parser only ever sees that frame.

Conventions: ties count in the win-rate denominator but not in W/L;
W/L = wins/losses, flagged infinite when losses = 0 with wins > 0, and
defined as 1.0 when wins = losses = 0.

The human-rating path exports items to a CSV and re-imports verdict rows
through the same parser, so auto and human numbers share one code path.
"""

from __future__ import annotations

import csv
import logging
import math
import random
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import RatingParseError, ValidationError
from .llmclient import CompletionRequest, LLMClient

logger = logging.getLogger(__name__)

DEFAULT_RUBRIC = (
    "Coherence & Organization",
    "Relevance & Focus",
    "Verifiability",
)

OVERALL = "Overall"


class Outcome(str, Enum):
    TEST_WINS = "test_wins"
    BASE_WINS = "base_wins"
    TIE = "tie"


class RaterKind(str, Enum):
    AUTO = "auto"
    HUMAN = "human"


@dataclass
class SxSItem:
    """One comparison; flipped=True means side A holds the test output."""

    item_id: str
    context: str
    output_a: str
    output_b: str
    flipped: bool
    rubric_dims: tuple[str, ...] = DEFAULT_RUBRIC

    def __post_init__(self) -> None:
        if not self.output_a.strip() or not self.output_b.strip():
            raise ValidationError(f"item {self.item_id!r} has an empty output side")
        if not self.rubric_dims:
            raise ValidationError(f"item {self.item_id!r} has an empty rubric")


@dataclass(frozen=True)
class Verdict:
    """Parsed judgment in the unflipped test/base frame."""

    item_id: str
    dimensions: Mapping[str, Outcome]
    overall: Outcome
    rater: RaterKind


@dataclass(frozen=True)
class DimensionTally:
    wins: int
    losses: int
    ties: int


@dataclass(frozen=True)
class SxSReport:
    """Aggregates in the test frame; win_rate and W/L use the overall verdict."""

    n_items: int
    n_unrated: int
    dimensions: dict[str, DimensionTally]
    overall: DimensionTally
    win_rate: float
    wl_ratio: float
    wl_infinite: bool


def make_pairs(
    test_outputs: Sequence[str],
    base_outputs: Sequence[str],
    contexts: Sequence[str],
    seed: int,
    item_ids: Sequence[str] | None = None,
    rubric: Sequence[str] = DEFAULT_RUBRIC,
) -> list[SxSItem]:
    """Pair aligned outputs, flipping each item's sides with a seeded coin."""
    if not (len(test_outputs) == len(base_outputs) == len(contexts)):
        raise ValidationError(
            f"misaligned inputs: {len(test_outputs)} test, "
            f"{len(base_outputs)} base, {len(contexts)} contexts"
        )
    if item_ids is not None and len(item_ids) != len(test_outputs):
        raise ValidationError("item_ids length does not match outputs")
    rng = random.Random(seed)
    items = []
    for i, (test, base, context) in enumerate(
        zip(test_outputs, base_outputs, contexts)
    ):
        flipped = rng.random() < 0.5
        items.append(
            SxSItem(
                item_id=item_ids[i] if item_ids is not None else f"item-{i:05d}",
                context=context,
                output_a=test if flipped else base,
                output_b=base if flipped else test,
                flipped=flipped,
                rubric_dims=tuple(rubric),
            )
        )
    return items


_RATER_TEMPLATE = """You are comparing two articles written for the same request. Read both, \
judge each dimension, then give an overall preference. An article wins a \
dimension if it is clearly better on it; answer tie when neither is.

Answer with exactly one line per dimension in the form "<dimension>: A", \
"<dimension>: B" or "<dimension>: tie", then one final line "Overall: A", \
"Overall: B" or "Overall: tie". Output nothing else.

### Request
{context}

### Article A
{output_a}

### Article B
{output_b}

### Dimensions
{dimensions}

### Judgment
"""


def build_rater_prompt(item: SxSItem, rubric: Sequence[str] | None = None) -> str:
    """Render the deterministic comparison prompt for one item."""
    dims = tuple(rubric) if rubric is not None else item.rubric_dims
    if not dims:
        raise ValidationError("rubric must be non-empty")
    return _RATER_TEMPLATE.format(
        context=item.context,
        output_a=item.output_a,
        output_b=item.output_b,
        dimensions="\n".join(f"- {d}" for d in dims),
    )


def _unflip(choice: str, flipped: bool) -> Outcome:
    if choice == "tie":
        return Outcome.TIE
    a_wins = choice == "A"
    test_on_a = flipped
    return Outcome.TEST_WINS if a_wins == test_on_a else Outcome.BASE_WINS


def _find_choice(response: str, label: str) -> str:
    pattern = re.compile(
        rf"(?mi)^\s*{re.escape(label)}\s*:\s*(A|B|tie)\s*$"
    )
    matches = pattern.findall(response)
    if not matches:
        raise RatingParseError(f"no verdict line for {label!r}")
    # The last occurrence wins: raters sometimes restate their answer.
    choice = matches[-1]
    return "tie" if choice.lower() == "tie" else choice.upper()


def parse_verdict(
    response: str, item: SxSItem, rater: RaterKind = RaterKind.AUTO
) -> Verdict:
    """Parse the rater grammar and unflip every choice into the test frame."""
    dimensions = {
        dim: _unflip(_find_choice(response, dim), item.flipped)
        for dim in item.rubric_dims
    }
    overall = _unflip(_find_choice(response, OVERALL), item.flipped)
    return Verdict(
        item_id=item.item_id,
        dimensions=dimensions,
        overall=overall,
        rater=rater,
    )


def rate_items(
    items: Sequence[SxSItem],
    client: LLMClient,
    model_id: str,
    max_output_tokens: int = 64,
    seed: int = 0,
) -> tuple[list[Verdict], int]:
    """Rate every item through the client; returns (verdicts, unrated count)."""
    verdicts = []
    unrated = 0
    for item in items:
        request = CompletionRequest(
            model_id=model_id,
            prompt=build_rater_prompt(item),
            max_output_tokens=max_output_tokens,
            temperature=0.0,
            seed=seed,
        )
        response = client.complete(request)
        try:
            verdicts.append(parse_verdict(response.text, item))
        except RatingParseError as exc:
            unrated += 1
            logger.warning("item %s unrated: %s", item.item_id, exc)
    return verdicts, unrated


def _tally(outcomes: Iterable[Outcome]) -> DimensionTally:
    wins = losses = ties = 0
    for outcome in outcomes:
        if outcome is Outcome.TEST_WINS:
            wins += 1
        elif outcome is Outcome.BASE_WINS:
            losses += 1
        else:
            ties += 1
    return DimensionTally(wins=wins, losses=losses, ties=ties)


def aggregate(verdicts: Sequence[Verdict], n_unrated: int = 0) -> SxSReport:
    """Fold verdicts into per-dimension tallies plus win rate and W/L ratio."""
    if not verdicts:
        raise ValidationError("aggregate needs at least one verdict")
    ordered = sorted(verdicts, key=lambda v: v.item_id)
    dims = list(ordered[0].dimensions.keys())
    for verdict in ordered:
        if list(verdict.dimensions.keys()) != dims:
            raise ValidationError(
                f"verdict {verdict.item_id!r} has a different rubric"
            )
    dimensions = {
        dim: _tally(v.dimensions[dim] for v in ordered) for dim in dims
    }
    overall = _tally(v.overall for v in ordered)
    n = len(ordered)
    win_rate = overall.wins / n
    if overall.losses > 0:
        wl_ratio, wl_infinite = overall.wins / overall.losses, False
    elif overall.wins > 0:
        wl_ratio, wl_infinite = math.inf, True
    else:
        wl_ratio, wl_infinite = 1.0, False
    return SxSReport(
        n_items=n,
        n_unrated=n_unrated,
        dimensions=dimensions,
        overall=overall,
        win_rate=win_rate,
        wl_ratio=wl_ratio,
        wl_infinite=wl_infinite,
    )


def report_to_record(report: SxSReport) -> dict[str, object]:
    """JSON-safe structured form; an infinite W/L is carried by the flag."""
    return {
        "n_items": report.n_items,
        "n_unrated": report.n_unrated,
        "dimensions": {
            dim: {"wins": t.wins, "losses": t.losses, "ties": t.ties}
            for dim, t in report.dimensions.items()
        },
        "overall": {
            "wins": report.overall.wins,
            "losses": report.overall.losses,
            "ties": report.overall.ties,
        },
        "win_rate": report.win_rate,
        "wl_ratio": None if report.wl_infinite else report.wl_ratio,
        "wl_infinite": report.wl_infinite,
    }


def render_report(report: SxSReport) -> str:
    """Human-readable table of the aggregate numbers."""
    rows = [("dimension", "wins", "losses", "ties")]
    for dim, tally in report.dimensions.items():
        rows.append((dim, str(tally.wins), str(tally.losses), str(tally.ties)))
    rows.append(
        (OVERALL, str(report.overall.wins), str(report.overall.losses), str(report.overall.ties))
    )
    widths = [max(len(row[i]) for row in rows) for i in range(4)]
    lines = [
        "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
        for row in rows
    ]
    wl = "inf" if report.wl_infinite else f"{report.wl_ratio:.4f}"
    lines.append("")
    lines.append(f"items rated: {report.n_items}  unrated: {report.n_unrated}")
    lines.append(f"win rate: {report.win_rate:.4f}  W/L: {wl}")
    return "\n".join(lines)


def export_items(path: str | Path, items: Sequence[SxSItem]) -> None:
    """Write rating sheets: one row per item, articles in on-screen order."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["item_id", "context", "article_1", "article_2"]
        )
        writer.writeheader()
        for item in items:
            writer.writerow(
                {
                    "item_id": item.item_id,
                    "context": item.context,
                    "article_1": item.output_a,
                    "article_2": item.output_b,
                }
            )


def import_verdicts(
    path: str | Path, items: Sequence[SxSItem]
) -> tuple[list[Verdict], int]:
    """Read human rating rows {item_id, dimension, choice} and re-parse them.

    Rows are grouped per item, rendered back into the answer grammar, and
    pushed through parse_verdict so unflipping and validation are identical
    to the auto path. Returns (verdicts, unrated count).
    """
    by_id = {item.item_id: item for item in items}
    rows: dict[str, list[tuple[str, str]]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"item_id", "dimension", "choice"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValidationError(
                f"verdict file needs columns {sorted(required)}, "
                f"got {reader.fieldnames}"
            )
        for row in reader:
            item_id = row["item_id"].strip()
            if item_id not in by_id:
                raise ValidationError(f"verdict row for unknown item {item_id!r}")
            rows.setdefault(item_id, []).append(
                (row["dimension"].strip(), row["choice"].strip())
            )
    verdicts = []
    unrated = 0
    for item_id in sorted(rows):
        response = "\n".join(f"{dim}: {choice}" for dim, choice in rows[item_id])
        try:
            verdicts.append(
                parse_verdict(response, by_id[item_id], rater=RaterKind.HUMAN)
            )
        except RatingParseError as exc:
            unrated += 1
            logger.warning("item %s unrated: %s", item_id, exc)
    return verdicts, unrated
