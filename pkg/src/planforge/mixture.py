"""Assemble training mixtures for the three task forms and invert them.

Task forms:

* direct: context -> article
* plan_out: context -> plan then article (the plan is trained as a visible
  chain the model writes before the article)
* plan_in: context plus a finished plan -> article

Instructions are registered per (dataset family, task) and emitted
byte-for-byte; the composed model prompt is always instruction + input_text,
a plain concatenation, so each instruction template ends with its payload
label. Plans are serialized under two-hash section sentinels and the
article follows a terminal "## Article" sentinel, which makes extraction a
string split.

Token limits use the pluggable estimator with a 5% safety margin. Inputs
over the limit are tail-truncated at a sentence boundary and flagged;
over-long targets drop the whole example, never truncate it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .corpus import Document, estimate_tokens, truncate_at_sentence
from .errors import ExampleDropped, ExtractionError, ValidationError
from .scoring import IntermediateStep
from .synthesis import STEP_LABELS, TOKEN_SAFETY_MARGIN, StepKind

logger = logging.getLogger(__name__)

ARTICLE_SENTINEL = "## Article"


class TaskForm(str, Enum):
    DIRECT = "direct"
    PLAN_THEN_WRITE = "plan_out"
    PLAN_AS_INPUT = "plan_in"


class DatasetFamily(str, Enum):
    NEWS = "news"
    ENCYCLOPEDIA = "encyclopedia"


# (input_limit, output_limit) in estimated tokens.
DEFAULT_LIMITS: dict[DatasetFamily, tuple[int, int]] = {
    DatasetFamily.NEWS: (16000, 4000),
    DatasetFamily.ENCYCLOPEDIA: (1000, 6000),
}

INSTRUCTION_TEMPLATES: dict[tuple[DatasetFamily, TaskForm], str] = {
    (DatasetFamily.NEWS, TaskForm.DIRECT): (
        "Given the body of the academic paper, generate a whole news article."
        "\n\nAcademic paper body: "
    ),
    (DatasetFamily.NEWS, TaskForm.PLAN_THEN_WRITE): (
        "Given the academic paper's full text, first generate a news article's "
        "summary, the high-level outline and detailed key information snippets, "
        "then leverage those information to generate a complete news article "
        "with title and body.\n\nAcademic paper body: "
    ),
    (DatasetFamily.NEWS, TaskForm.PLAN_AS_INPUT): (
        "Given the body of the academic paper and a news article's summary, "
        "high-level outline and detailed key information snippets, generate a "
        "complete news article with title and body.\n\nAcademic paper body: "
    ),
    (DatasetFamily.ENCYCLOPEDIA, TaskForm.DIRECT): (
        "Generate a comprehensive Wikipedia page about the specified topic."
        "\n\nTopic: "
    ),
    (DatasetFamily.ENCYCLOPEDIA, TaskForm.PLAN_THEN_WRITE): (
        "Given a specific topic, you are asked to write a comprehensive "
        "Wikipedia page about this topic. Let's write step by step. First "
        "generate a summary, a high-level outline and a list of detailed key "
        "information snippets. Then, follow the summary, high-level outline "
        "and detailed key information snippets, generate a Wikipedia page "
        "about this topic.\n\nTopic: "
    ),
    (DatasetFamily.ENCYCLOPEDIA, TaskForm.PLAN_AS_INPUT): (
        "Given a specific topic, a summary, a high-level outline and a list "
        "of detailed key information snippets, write a comprehensive "
        "Wikipedia page about this topic.\n\nTopic: "
    ),
}

DEFAULT_PLAN_ORDER = (StepKind.SUMMARY, StepKind.OUTLINE, StepKind.KEY_INFORMATION)


@dataclass
class MixtureSpec:
    """Everything that determines mixture bytes besides the corpus itself."""

    family: DatasetFamily
    weights: dict[TaskForm, float] = field(
        default_factory=lambda: {task: 1.0 for task in TaskForm}
    )
    input_limit: int | None = None
    output_limit: int | None = None
    interleave_seed: int = 0
    plan_serialization_order: tuple[StepKind, ...] = DEFAULT_PLAN_ORDER

    def __post_init__(self) -> None:
        self.family = DatasetFamily(self.family)
        default_in, default_out = DEFAULT_LIMITS[self.family]
        if self.input_limit is None:
            self.input_limit = default_in
        if self.output_limit is None:
            self.output_limit = default_out
        if self.input_limit <= 0 or self.output_limit <= 0:
            raise ValidationError("token limits must be positive")
        if any(w < 0 for w in self.weights.values()):
            raise ValidationError("mixture weights must be non-negative")
        if not any(w > 0 for w in self.weights.values()):
            raise ValidationError("at least one mixture weight must be positive")

    def checksum(self) -> str:
        payload = json.dumps(
            {
                "family": self.family.value,
                "weights": {t.value: w for t, w in sorted(self.weights.items())},
                "input_limit": self.input_limit,
                "output_limit": self.output_limit,
                "interleave_seed": self.interleave_seed,
                "plan_serialization_order": [
                    k.value for k in self.plan_serialization_order
                ],
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class TrainingExample:
    task: TaskForm
    instruction: str
    input_text: str
    target_text: str
    doc_id: str
    truncated: bool = False

    def __post_init__(self) -> None:
        if not self.target_text.strip():
            raise ValidationError(f"example for {self.doc_id!r} has an empty target")


@dataclass
class MixtureResult:
    """Assembled examples plus the counts a manifest needs."""

    examples: list[TrainingExample]
    emitted: dict[str, int]
    dropped: dict[str, int]
    spec_checksum: str


def _step_text(step: IntermediateStep | str) -> str:
    return step.text if isinstance(step, IntermediateStep) else str(step)


def serialize_plan(
    steps: Mapping[StepKind, IntermediateStep | str],
    order: Sequence[StepKind] = DEFAULT_PLAN_ORDER,
) -> str:
    """Join step sections under their sentinels, stripped, in the given order."""
    sections = []
    for kind in order:
        if kind not in steps:
            raise ValidationError(f"plan is missing the {kind.value} step")
        sections.append(f"## {STEP_LABELS[kind]}\n{_step_text(steps[kind]).strip()}")
    return "\n\n".join(sections)


_PLAN_SENTINEL = re.compile(
    r"(?m)^## (Summary|Outline|Key Information)[ \t]*$\n?"
)
_LABEL_TO_KIND = {label: kind for kind, label in STEP_LABELS.items()}


def parse_plan(text: str) -> dict[StepKind, str]:
    """Invert serialize_plan: map each sentinel-headed section to its text."""
    parts = _PLAN_SENTINEL.split(text)
    steps: dict[StepKind, str] = {}
    for label, block in zip(parts[1::2], parts[2::2]):
        steps[_LABEL_TO_KIND[label]] = block.strip()
    return steps


_ARTICLE_LINE = re.compile(r"(?m)^## Article[ \t]*$\n?")


def extract_article(model_output: str) -> str:
    """Return the text after the last article sentinel line, trimmed.

    Outputs without the sentinel (direct-form generations) pass through
    trimmed. An empty result raises ExtractionError.
    """
    matches = list(_ARTICLE_LINE.finditer(model_output))
    article = model_output[matches[-1].end() :] if matches else model_output
    article = article.strip()
    if not article:
        raise ExtractionError("no article text found in model output")
    return article


def payload_text(doc: Document, family: DatasetFamily) -> str:
    """The input payload appended to the instruction template.

    News inputs are the full source context; encyclopedia inputs are the bare
    topic, because the instruction template already phrases the request.
    """
    if family is DatasetFamily.NEWS:
        return doc.context
    if not doc.title.strip():
        raise ValidationError(
            f"document {doc.id!r} needs a title to build a topic payload"
        )
    return doc.title.strip()


def build_example(
    doc: Document,
    steps: Mapping[StepKind, IntermediateStep | str] | None,
    task: TaskForm,
    spec: MixtureSpec,
    estimator: Callable[[str], int] = estimate_tokens,
) -> TrainingExample:
    """Compose one training example, honoring token limits.

    Raises ExampleDropped when the target exceeds the output limit or the
    non-payload input parts alone exceed the input limit.
    """
    if task is not TaskForm.DIRECT and not steps:
        raise ValidationError(f"{task.value} example for {doc.id!r} needs plan steps")
    instruction = INSTRUCTION_TEMPLATES[(spec.family, task)]
    payload = payload_text(doc, spec.family)
    plan = (
        serialize_plan(steps, spec.plan_serialization_order)
        if task is not TaskForm.DIRECT
        else ""
    )

    if task is TaskForm.PLAN_THEN_WRITE:
        target = f"{plan}\n\n{ARTICLE_SENTINEL}\n{doc.body}"
    else:
        target = doc.body
    effective_out = int(spec.output_limit * (1 - TOKEN_SAFETY_MARGIN))
    if estimator(target) > effective_out:
        raise ExampleDropped(
            f"{task.value} target for {doc.id!r} estimates over the output "
            f"limit ({estimator(target)} > {effective_out})",
            doc_id=doc.id,
            reason="target_over_limit",
        )

    input_suffix = f"\n\n{plan}" if task is TaskForm.PLAN_AS_INPUT else ""
    effective_in = int(spec.input_limit * (1 - TOKEN_SAFETY_MARGIN))
    budget = effective_in - estimator(instruction) - estimator(input_suffix)
    if budget <= 0:
        raise ExampleDropped(
            f"{task.value} input scaffolding for {doc.id!r} exceeds the input limit",
            doc_id=doc.id,
            reason="input_overhead_over_limit",
        )
    payload, truncated = truncate_at_sentence(payload, budget, estimator)
    if not payload:
        raise ExampleDropped(
            f"no payload sentence of {doc.id!r} fits the input budget {budget}",
            doc_id=doc.id,
            reason="input_overhead_over_limit",
        )
    if truncated:
        logger.info("truncated %s input for %s to %d tokens", task.value, doc.id, budget)
    return TrainingExample(
        task=task,
        instruction=instruction,
        input_text=payload + input_suffix,
        target_text=target,
        doc_id=doc.id,
        truncated=truncated,
    )


def _eligible(
    docs: Sequence[Document],
    steps_store: Mapping[str, Mapping[StepKind, IntermediateStep | str]],
    task: TaskForm,
    spec: MixtureSpec,
) -> list[Document]:
    if task is TaskForm.DIRECT:
        return list(docs)
    needed = set(spec.plan_serialization_order)
    return [
        d for d in docs if needed.issubset(steps_store.get(d.id, {}).keys())
    ]


def assemble_mixture(
    docs: Sequence[Document],
    steps_store: Mapping[str, Mapping[StepKind, IntermediateStep | str]],
    spec: MixtureSpec,
    tasks: Iterable[TaskForm] | None = None,
    estimator: Callable[[str], int] = estimate_tokens,
) -> MixtureResult:
    """Emit weighted, deterministically interleaved examples for each task.

    Per task, round(weight * n_eligible) examples are drawn from a seeded
    permutation of the eligible documents (cycling when the weight exceeds
    1.0). Examples over their token limits are dropped and counted, not
    replaced. The combined stream is shuffled once under the interleave seed,
    so identical inputs yield byte-identical mixtures.
    """
    requested = list(tasks) if tasks is not None else list(TaskForm)
    requested = [t for t in TaskForm if t in set(requested)]
    if not requested:
        raise ValidationError("no task forms requested")

    examples: list[TrainingExample] = []
    emitted: dict[str, int] = {}
    dropped: dict[str, int] = {}
    for task in requested:
        weight = spec.weights.get(task, 0.0)
        pool = _eligible(docs, steps_store, task, spec)
        count = round(weight * len(pool))
        if count == 0 or not pool:
            emitted[task.value] = 0
            dropped[task.value] = 0
            continue
        order = list(range(len(pool)))
        random.Random(f"{spec.interleave_seed}:{task.value}").shuffle(order)
        task_examples = []
        task_dropped = 0
        for i in range(count):
            doc = pool[order[i % len(pool)]]
            try:
                task_examples.append(
                    build_example(doc, steps_store.get(doc.id), task, spec, estimator)
                )
            except ExampleDropped as drop:
                task_dropped += 1
                logger.info("dropped example: %s", drop)
        examples.extend(task_examples)
        emitted[task.value] = len(task_examples)
        dropped[task.value] = task_dropped
    if not examples:
        raise ValidationError("mixture has zero eligible examples")
    random.Random(f"{spec.interleave_seed}:interleave").shuffle(examples)
    return MixtureResult(
        examples=examples,
        emitted=emitted,
        dropped=dropped,
        spec_checksum=spec.checksum(),
    )


def example_to_record(example: TrainingExample) -> dict[str, object]:
    return {
        "task": example.task.value,
        "instruction": example.instruction,
        "input": example.input_text,
        "target": example.target_text,
        "doc_id": example.doc_id,
        "truncated": example.truncated,
    }


def write_mixture(path: str | Path, examples: Iterable[TrainingExample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for example in examples:
            fh.write(json.dumps(example_to_record(example), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def read_mixture(path: str | Path) -> list[TrainingExample]:
    examples = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            examples.append(
                TrainingExample(
                    task=TaskForm(record["task"]),
                    instruction=str(record["instruction"]),
                    input_text=str(record["input"]),
                    target_text=str(record["target"]),
                    doc_id=str(record["doc_id"]),
                    truncated=bool(record["truncated"]),
                )
            )
    return examples
