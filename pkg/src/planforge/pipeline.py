"""Resumable file-based pipeline stages with digest-checked manifests.

Each stage reads a section of one JSON config file, writes its outputs under
the config's workdir, and records a manifest
``{stage, config_digest, inputs_digest, counts, duration_s, details}``.
A stage re-run with unchanged config and input digests is a no-op. Running
a stage whose upstream manifest is missing raises DependencyError; an
upstream manifest recorded under a config section that has since changed
raises StaleInputError unless forced.

Relative paths in the config resolve against the config file's directory.
Stage output files are deterministic given the same inputs and a warm
replay cache; durations live only in manifests, never in outputs, so full
replay-mode runs are byte-reproducible.

Stage graph: ingest -> plan -> score -> mixture -> report (report also needs
ingest). eval_rouge and eval_sxs are standalone, except that eval_rouge
gains an ingest dependency when it takes references from a corpus split.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping

from . import corpus as corpus_mod
from . import mixture as mixture_mod
from . import scoring as scoring_mod
from . import synthesis as synthesis_mod
from . import sxs as sxs_mod
from .errors import DependencyError, StaleInputError, ValidationError
from .llmclient import ClientMode, HttpTransport, LLMClient, RateLimiter, RetryPolicy
from .rouge import corpus_rouge

logger = logging.getLogger(__name__)


class Stage(str, Enum):
    INGEST = "ingest"
    PLAN = "plan"
    SCORE = "score"
    MIXTURE = "mixture"
    EVAL_ROUGE = "eval_rouge"
    EVAL_SXS = "eval_sxs"
    REPORT = "report"


# Config section consulted (and digested) per stage.
STAGE_SECTION: dict[Stage, str] = {
    Stage.INGEST: "corpus",
    Stage.PLAN: "synthesis",
    Stage.SCORE: "scoring",
    Stage.MIXTURE: "mixture",
    Stage.EVAL_ROUGE: "eval_rouge",
    Stage.EVAL_SXS: "eval_sxs",
    Stage.REPORT: "report",
}

# Upstream stages whose manifests must exist and be fresh.
STAGE_DEPS: dict[Stage, tuple[Stage, ...]] = {
    Stage.INGEST: (),
    Stage.PLAN: (Stage.INGEST,),
    Stage.SCORE: (Stage.INGEST, Stage.PLAN),
    Stage.MIXTURE: (Stage.INGEST, Stage.SCORE),
    Stage.EVAL_ROUGE: (),
    Stage.EVAL_SXS: (),
    Stage.REPORT: (Stage.INGEST, Stage.MIXTURE),
}

# Config key the --seed override rewrites, for stages that have one.
STAGE_SEED_KEY: dict[Stage, str] = {
    Stage.INGEST: "split_seed",
    Stage.PLAN: "base_seed",
    Stage.MIXTURE: "seed",
    Stage.EVAL_SXS: "pairs_seed",
}


@dataclass
class PipelineConfig:
    """Parsed config plus the directory its relative paths resolve against."""

    raw: dict
    base_dir: Path

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ValidationError(f"config {path} must be a JSON object")
        if "workdir" not in raw:
            raise ValidationError(f"config {path} is missing 'workdir'")
        return cls(raw=raw, base_dir=path.parent.resolve())

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.raw, fh, ensure_ascii=False, indent=2, sort_keys=True)
            fh.write("\n")

    @property
    def workdir(self) -> Path:
        return self.resolve(str(self.raw["workdir"]))

    def resolve(self, p: str | Path) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def section(self, name: str) -> dict:
        value = self.raw.get(name, {})
        if not isinstance(value, dict):
            raise ValidationError(f"config section {name!r} must be an object")
        return dict(value)


def section_digest(section: Mapping[str, object]) -> str:
    payload = json.dumps(section, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def inputs_digest(paths: list[Path]) -> str:
    """Digest of consumed file contents, order-independent."""
    lines = sorted(f"{p.name}:{_file_sha256(p)}" for p in paths)
    return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()


@dataclass
class StageManifest:
    stage: str
    config_digest: str
    inputs_digest: str
    counts: dict[str, int]
    duration_s: float
    details: dict = field(default_factory=dict)
    skipped: bool = False  # runtime-only; not persisted

    def to_record(self) -> dict:
        return {
            "stage": self.stage,
            "config_digest": self.config_digest,
            "inputs_digest": self.inputs_digest,
            "counts": self.counts,
            "duration_s": self.duration_s,
            "details": self.details,
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "StageManifest":
        return cls(
            stage=str(record["stage"]),
            config_digest=str(record["config_digest"]),
            inputs_digest=str(record["inputs_digest"]),
            counts={k: int(v) for k, v in dict(record["counts"]).items()},
            duration_s=float(record["duration_s"]),
            details=dict(record.get("details", {})),
        )


def _manifest_path(config: PipelineConfig, stage: Stage) -> Path:
    return config.workdir / "manifests" / f"{stage.value}.json"


def read_manifest(config: PipelineConfig, stage: Stage) -> StageManifest | None:
    path = _manifest_path(config, stage)
    if not path.exists():
        return None
    with open(path, "r", encoding="utf-8") as fh:
        return StageManifest.from_record(json.load(fh))


def _write_json(path: Path, obj: object) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")


def _effective_section(
    config: PipelineConfig, stage: Stage, seed: int | None
) -> dict:
    section = config.section(STAGE_SECTION[stage])
    if seed is None:
        return section
    key = STAGE_SEED_KEY.get(stage)
    if key is None:
        raise ValidationError(f"--seed does not apply to the {stage.value} stage")
    section[key] = seed
    return section


def build_client(config: PipelineConfig) -> LLMClient:
    """Client from the config's client section; env vars fill missing keys."""
    section = config.section("client")
    env = os.environ
    mode = ClientMode(section.get("mode") or env.get("PLANFORGE_MODE", "replay"))
    cache_dir = section.get("cache_dir") or env.get("PLANFORGE_CACHE_DIR")
    cache_path = (
        config.resolve(str(cache_dir)) if cache_dir else config.workdir / "llm-cache"
    )
    transport = None
    if mode is not ClientMode.REPLAY:
        endpoint = section.get("endpoint") or env.get("PLANFORGE_ENDPOINT")
        if not endpoint:
            raise ValidationError(f"{mode.value} mode needs an endpoint")
        transport = HttpTransport(str(endpoint), api_key=env.get("PLANFORGE_API_KEY"))
    limiter = None
    if section.get("rate_per_s"):
        limiter = RateLimiter(
            float(section["rate_per_s"]), burst=int(section.get("burst", 1))
        )
    retry = RetryPolicy(
        max_attempts=int(section.get("max_attempts", 5)),
        backoff_base_s=float(section.get("backoff_base_s", 1.0)),
        backoff_factor=float(section.get("backoff_factor", 2.0)),
    )
    return LLMClient(
        cache_dir=cache_path,
        mode=mode,
        transport=transport,
        retry=retry,
        limiter=limiter,
    )


def _split_path(config: PipelineConfig, name: str) -> Path:
    return config.workdir / "splits" / f"{name}.jsonl"


def read_text_records(path: Path) -> list[dict]:
    """Read JSONL records that each carry a 'text' field."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            record = json.loads(line)
            if not isinstance(record, dict) or "text" not in record:
                raise ValidationError(f"{path}:{lineno}: record needs a 'text' field")
            records.append(record)
    return records


# ---------------------------------------------------------------------------
# Stage bodies. Each returns (counts, details) and writes its outputs.
# ---------------------------------------------------------------------------


def _ingest_inputs(config: PipelineConfig, section: dict) -> list[Path]:
    if "path" not in section:
        raise ValidationError("corpus section needs a 'path'")
    return [config.resolve(str(section["path"]))]


def _run_ingest(config: PipelineConfig, section: dict) -> tuple[dict, dict]:
    docs = corpus_mod.read_documents(
        config.resolve(str(section["path"])), section.get("heading_pattern")
    )
    docs.sort(key=lambda d: d.id)
    kept = corpus_mod.filter_corpus(
        docs,
        min_words=int(section.get("min_words", 1000)),
        require_sections=bool(section.get("require_sections", True)),
    )
    sizes = section.get("split_sizes")
    if not (isinstance(sizes, list) and len(sizes) == 3):
        raise ValidationError("corpus section needs 'split_sizes': [train, validation, evaluation]")
    split = corpus_mod.split_corpus(
        kept, (int(sizes[0]), int(sizes[1]), int(sizes[2])), int(section.get("split_seed", 0))
    )
    for name, bucket in split.as_mapping().items():
        path = _split_path(config, name)
        path.parent.mkdir(parents=True, exist_ok=True)
        corpus_mod.write_documents(path, bucket)
    counts = {
        "docs_read": len(docs),
        "docs_kept": len(kept),
        "docs_filtered_out": len(docs) - len(kept),
        "train": len(split.train),
        "validation": len(split.validation),
        "evaluation": len(split.evaluation),
    }
    return counts, {"split_seed": int(section.get("split_seed", 0))}


def _read_exemplars(config: PipelineConfig, section: dict) -> dict:
    exemplars: dict[synthesis_mod.StepKind, list[tuple[str, str]]] = {}
    for kind_name, path in dict(section.get("exemplar_paths", {})).items():
        kind = synthesis_mod.StepKind(kind_name)
        pairs = []
        with open(config.resolve(str(path)), "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                record = json.loads(line)
                pairs.append((str(record["article"]), str(record["step"])))
        exemplars[kind] = pairs
    return exemplars


def _plan_inputs(config: PipelineConfig, section: dict) -> list[Path]:
    paths = [_split_path(config, "train")]
    for path in dict(section.get("exemplar_paths", {})).values():
        paths.append(config.resolve(str(path)))
    return paths


def _run_plan(config: PipelineConfig, section: dict) -> tuple[dict, dict]:
    if "model_id" not in section:
        raise ValidationError("synthesis section needs a 'model_id'")
    params = synthesis_mod.SamplerParams(
        model_id=str(section["model_id"]),
        max_output_tokens=int(section.get("max_output_tokens", 1024)),
        temperature=float(section.get("temperature", 0.7)),
        base_seed=int(section.get("base_seed", 0)),
        input_limit=(
            int(section["input_limit"]) if section.get("input_limit") else None
        ),
    )
    k = int(section.get("k", 4))
    client = build_client(config)
    exemplars = _read_exemplars(config, section)
    docs = corpus_mod.read_documents(_split_path(config, "train"))
    sets = []
    for doc in docs:
        for kind in synthesis_mod.StepKind:
            sets.append(
                synthesis_mod.generate_candidates(
                    doc, kind, k, params, client, exemplars.get(kind, ())
                )
            )
    synthesis_mod.write_candidate_sets(config.workdir / "candidates.jsonl", sets)
    counts = {
        "docs": len(docs),
        "candidate_sets": len(sets),
        "candidates": sum(s.k for s in sets),
    }
    return counts, {"k": k, "model_id": params.model_id}


def _score_inputs(config: PipelineConfig, section: dict) -> list[Path]:
    return [config.workdir / "candidates.jsonl", _split_path(config, "train")]


def _length_params(section: dict) -> dict:
    params = dict(scoring_mod.DEFAULT_LENGTH_PARAMS)
    for kind_name, raw in dict(section.get("length_params", {})).items():
        kind = synthesis_mod.StepKind(kind_name)
        params[kind] = scoring_mod.LengthParams(
            target_word_ratio=float(raw["word_ratio"]),
            target_sentence_ratio=float(raw["sentence_ratio"]),
        )
    return params


def _build_scorer(config: PipelineConfig, section: dict):
    choice = str(section.get("scorer", "lexical"))
    if choice == "lexical":
        return scoring_mod.LexicalEntailmentScorer(
            stopwords=frozenset(section.get("stopwords", []))
        )
    if choice == "llm":
        if "judge_model_id" not in section:
            raise ValidationError("llm scorer needs 'judge_model_id'")
        return scoring_mod.LLMEntailmentScorer(
            build_client(config), str(section["judge_model_id"])
        )
    raise ValidationError(f"unknown scorer {choice!r} (expected 'lexical' or 'llm')")


def _run_score(config: PipelineConfig, section: dict) -> tuple[dict, dict]:
    docs = {
        d.id: d for d in corpus_mod.read_documents(_split_path(config, "train"))
    }
    sets = synthesis_mod.read_candidate_sets(config.workdir / "candidates.jsonl")
    params = _length_params(section)
    scorer = _build_scorer(config, section)
    steps = []
    skipped = 0
    for cset in sets:
        if cset.doc_id not in docs:
            raise ValidationError(
                f"candidates reference unknown document {cset.doc_id!r}"
            )
        try:
            steps.append(
                scoring_mod.select_best(cset, docs[cset.doc_id], params[cset.kind], scorer)
            )
        except ValidationError as exc:
            # A set whose candidates are all empty cannot be selected from;
            # the document just loses this kind.
            skipped += 1
            logger.warning("skipping candidate set: %s", exc)
    scoring_mod.write_steps(config.workdir / "steps.jsonl", steps)
    scoring_mod.write_score_table(config.workdir / "scores.jsonl", steps)
    counts = {
        "docs": len(docs),
        "steps": len(steps),
        "skipped_sets": skipped,
        "candidates_scored": sum(len(s.all_scores) for s in steps),
    }
    return counts, {"scorer": str(section.get("scorer", "lexical"))}


def _mixture_inputs(config: PipelineConfig, section: dict) -> list[Path]:
    return [config.workdir / "steps.jsonl", _split_path(config, "train")]


def _mixture_spec(section: dict) -> tuple[mixture_mod.MixtureSpec, list]:
    if "family" not in section:
        raise ValidationError("mixture section needs a 'family'")
    tasks = [mixture_mod.TaskForm(t) for t in section.get("tasks", [t.value for t in mixture_mod.TaskForm])]
    weights = {
        mixture_mod.TaskForm(t): float(w)
        for t, w in dict(section.get("weights", {})).items()
    } or {task: 1.0 for task in mixture_mod.TaskForm}
    spec = mixture_mod.MixtureSpec(
        family=mixture_mod.DatasetFamily(section["family"]),
        weights=weights,
        input_limit=int(section["input_limit"]) if section.get("input_limit") else None,
        output_limit=int(section["output_limit"]) if section.get("output_limit") else None,
        interleave_seed=int(section.get("seed", 0)),
        plan_serialization_order=tuple(
            synthesis_mod.StepKind(k)
            for k in section.get(
                "plan_order", [k.value for k in mixture_mod.DEFAULT_PLAN_ORDER]
            )
        ),
    )
    return spec, tasks


def _run_mixture(config: PipelineConfig, section: dict) -> tuple[dict, dict]:
    docs = corpus_mod.read_documents(_split_path(config, "train"))
    steps_store = scoring_mod.read_steps(config.workdir / "steps.jsonl")
    spec, tasks = _mixture_spec(section)
    result = mixture_mod.assemble_mixture(docs, steps_store, spec, tasks)
    mixture_mod.write_mixture(config.workdir / "mixture.jsonl", result.examples)
    counts: dict[str, int] = {"examples_total": len(result.examples)}
    for task in tasks:
        emitted = result.emitted.get(task.value, 0)
        dropped = result.dropped.get(task.value, 0)
        counts[f"emitted_{task.value}"] = emitted
        counts[f"dropped_{task.value}"] = dropped
        counts[f"requested_{task.value}"] = emitted + dropped
    return counts, {"spec_checksum": result.spec_checksum}


def _eval_rouge_inputs(config: PipelineConfig, section: dict) -> list[Path]:
    paths = []
    if section.get("pairs_path"):
        paths.append(config.resolve(str(section["pairs_path"])))
        return paths
    if "candidates_path" not in section:
        raise ValidationError("eval_rouge section needs 'candidates_path' or 'pairs_path'")
    paths.append(config.resolve(str(section["candidates_path"])))
    if section.get("references_path"):
        paths.append(config.resolve(str(section["references_path"])))
    elif section.get("references_split"):
        paths.append(_split_path(config, str(section["references_split"])))
    else:
        raise ValidationError(
            "eval_rouge section needs one of 'references_path', "
            "'references_split' or 'pairs_path'"
        )
    return paths


def _eval_rouge_pairs(config: PipelineConfig, section: dict) -> list[tuple[str, str]]:
    extract = bool(section.get("extract_articles", False))

    def maybe_extract(text: str) -> str:
        return mixture_mod.extract_article(text) if extract else text

    if section.get("pairs_path"):
        records = []
        with open(config.resolve(str(section["pairs_path"])), "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                record = json.loads(line)
                if "candidate" not in record or "reference" not in record:
                    raise ValidationError(
                        f"pairs record at line {lineno} needs 'candidate' and 'reference'"
                    )
                records.append(
                    (maybe_extract(str(record["candidate"])), str(record["reference"]))
                )
        return records

    candidates = read_text_records(config.resolve(str(section["candidates_path"])))
    if section.get("references_split"):
        split_docs = corpus_mod.read_documents(
            _split_path(config, str(section["references_split"]))
        )
        by_id = {d.id: d for d in split_docs}
        pairs = []
        for record in candidates:
            doc_id = str(record.get("doc_id", ""))
            if doc_id not in by_id:
                raise ValidationError(
                    f"candidate record references unknown doc_id {doc_id!r}"
                )
            pairs.append((maybe_extract(str(record["text"])), by_id[doc_id].body))
        return pairs

    references = read_text_records(config.resolve(str(section["references_path"])))
    if len(candidates) != len(references):
        raise ValidationError(
            f"candidate/reference files are misaligned: "
            f"{len(candidates)} vs {len(references)}"
        )
    return [
        (maybe_extract(str(c["text"])), str(r["text"]))
        for c, r in zip(candidates, references)
    ]


def _run_eval_rouge(config: PipelineConfig, section: dict) -> tuple[dict, dict]:
    pairs = _eval_rouge_pairs(config, section)
    scores = corpus_rouge(
        pairs,
        stem=bool(section.get("stem", False)),
        stopwords=frozenset(section.get("stopwords", [])),
    )
    report = {"n_pairs": len(pairs), **scores.as_flat_dict()}
    _write_json(config.workdir / "eval" / "rouge_report.json", report)
    return {"n_pairs": len(pairs)}, {}


def _eval_sxs_inputs(config: PipelineConfig, section: dict) -> list[Path]:
    for key in ("test_path", "base_path", "contexts_path"):
        if key not in section:
            raise ValidationError(f"eval_sxs section needs {key!r}")
    return [
        config.resolve(str(section["test_path"])),
        config.resolve(str(section["base_path"])),
        config.resolve(str(section["contexts_path"])),
    ]


def _run_eval_sxs(config: PipelineConfig, section: dict) -> tuple[dict, dict]:
    if "model_id" not in section:
        raise ValidationError("eval_sxs section needs a 'model_id'")
    extract = bool(section.get("extract_articles", False))

    def texts(path_key: str, extracted: bool) -> list[str]:
        records = read_text_records(config.resolve(str(section[path_key])))
        out = []
        for record in records:
            text = str(record["text"])
            out.append(mixture_mod.extract_article(text) if extracted else text)
        return out

    test = texts("test_path", extract)
    base = texts("base_path", extract)
    contexts = texts("contexts_path", False)
    items = sxs_mod.make_pairs(
        test, base, contexts, seed=int(section.get("pairs_seed", 0))
    )
    if section.get("export_path"):
        sxs_mod.export_items(config.resolve(str(section["export_path"])), items)
    client = build_client(config)
    verdicts, unrated = sxs_mod.rate_items(
        items,
        client,
        model_id=str(section["model_id"]),
        max_output_tokens=int(section.get("max_output_tokens", 64)),
    )
    report = sxs_mod.aggregate(verdicts, n_unrated=unrated)
    _write_json(
        config.workdir / "eval" / "sxs_report.json", sxs_mod.report_to_record(report)
    )
    text_path = config.workdir / "eval" / "sxs_report.txt"
    with open(text_path, "w", encoding="utf-8") as fh:
        fh.write(sxs_mod.render_report(report))
        fh.write("\n")
    return {
        "items": len(items),
        "rated": report.n_items,
        "unrated": unrated,
    }, {}


def _report_inputs(config: PipelineConfig, section: dict) -> list[Path]:
    paths = [config.workdir / "mixture.jsonl"]
    for name in ("rouge_report.json", "sxs_report.json"):
        path = config.workdir / "eval" / name
        if path.exists():
            paths.append(path)
    return paths


def _run_report(config: PipelineConfig, section: dict) -> tuple[dict, dict]:
    ingest = read_manifest(config, Stage.INGEST)
    mixture = read_manifest(config, Stage.MIXTURE)
    assert ingest is not None and mixture is not None  # dependency-checked
    if ingest.counts["docs_read"] != ingest.counts["docs_kept"] + ingest.counts["docs_filtered_out"]:
        raise ValidationError("ingest counts do not reconcile")
    emitted = sum(v for k, v in mixture.counts.items() if k.startswith("emitted_"))
    if mixture.counts["examples_total"] != emitted:
        raise ValidationError("mixture counts do not reconcile")

    report: dict[str, object] = {
        "corpus": ingest.counts,
        "mixture": {"counts": mixture.counts, **mixture.details},
    }
    sections = 2
    for key, name in (("rouge", "rouge_report.json"), ("sxs", "sxs_report.json")):
        path = config.workdir / "eval" / name
        if path.exists():
            with open(path, "r", encoding="utf-8") as fh:
                report[key] = json.load(fh)
            sections += 1
    _write_json(config.workdir / "report" / "report.json", report)

    lines = ["pipeline report", "===============", ""]
    lines.append("corpus:")
    for key in sorted(ingest.counts):
        lines.append(f"  {key}: {ingest.counts[key]}")
    lines.append("mixture:")
    for key in sorted(mixture.counts):
        lines.append(f"  {key}: {mixture.counts[key]}")
    if "rouge" in report:
        lines.append("rouge:")
        rouge_report = report["rouge"]
        assert isinstance(rouge_report, dict)
        for key in sorted(rouge_report):
            value = rouge_report[key]
            lines.append(
                f"  {key}: {value:.6f}" if isinstance(value, float) else f"  {key}: {value}"
            )
    if "sxs" in report:
        lines.append("sxs:")
        sxs_report = report["sxs"]
        assert isinstance(sxs_report, dict)
        lines.append(f"  win_rate: {sxs_report['win_rate']}")
        lines.append(f"  wl_ratio: {sxs_report['wl_ratio']}")
        lines.append(f"  wl_infinite: {sxs_report['wl_infinite']}")
    path = config.workdir / "report" / "report.txt"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
    return {"sections": sections}, {}


_STAGE_INPUTS: dict[Stage, Callable[[PipelineConfig, dict], list[Path]]] = {
    Stage.INGEST: _ingest_inputs,
    Stage.PLAN: _plan_inputs,
    Stage.SCORE: _score_inputs,
    Stage.MIXTURE: _mixture_inputs,
    Stage.EVAL_ROUGE: _eval_rouge_inputs,
    Stage.EVAL_SXS: _eval_sxs_inputs,
    Stage.REPORT: _report_inputs,
}

_STAGE_RUNNERS: dict[Stage, Callable[[PipelineConfig, dict], tuple[dict, dict]]] = {
    Stage.INGEST: _run_ingest,
    Stage.PLAN: _run_plan,
    Stage.SCORE: _run_score,
    Stage.MIXTURE: _run_mixture,
    Stage.EVAL_ROUGE: _run_eval_rouge,
    Stage.EVAL_SXS: _run_eval_sxs,
    Stage.REPORT: _run_report,
}


def _dependencies(config: PipelineConfig, stage: Stage) -> tuple[Stage, ...]:
    deps = STAGE_DEPS[stage]
    if stage is Stage.EVAL_ROUGE and config.section("eval_rouge").get("references_split"):
        deps = deps + (Stage.INGEST,)
    return deps


def run_stage(
    stage: Stage | str,
    config: PipelineConfig,
    force: bool = False,
    seed: int | None = None,
) -> StageManifest:
    """Run one stage if its digests changed; otherwise return the prior manifest.

    Raises DependencyError when an upstream manifest is missing and
    StaleInputError when an upstream manifest was produced under a config
    section that no longer matches (suppressed by force=True).
    """
    stage = Stage(stage)
    for dep in _dependencies(config, stage):
        manifest = read_manifest(config, dep)
        if manifest is None:
            raise DependencyError(
                f"stage {stage.value!r} needs {dep.value!r} to have run first",
                stage=dep.value,
            )
        current = section_digest(config.section(STAGE_SECTION[dep]))
        if manifest.config_digest != current and not force:
            raise StaleInputError(
                f"stage {dep.value!r} ran under a different "
                f"{STAGE_SECTION[dep]!r} config; re-run it or pass --force",
                stage=dep.value,
            )

    section = _effective_section(config, stage, seed)
    config_digest = section_digest(section)
    input_paths = _STAGE_INPUTS[stage](config, section)
    for path in input_paths:
        if not path.exists():
            raise ValidationError(f"stage {stage.value!r} input does not exist: {path}")
    in_digest = inputs_digest(input_paths)

    existing = read_manifest(config, stage)
    if (
        existing is not None
        and existing.config_digest == config_digest
        and existing.inputs_digest == in_digest
        and not force
    ):
        logger.info("stage %s is up to date; skipping", stage.value)
        existing.skipped = True
        return existing

    started = time.monotonic()
    counts, details = _STAGE_RUNNERS[stage](config, section)
    manifest = StageManifest(
        stage=stage.value,
        config_digest=config_digest,
        inputs_digest=in_digest,
        counts=counts,
        duration_s=round(time.monotonic() - started, 6),
        details=details,
    )
    _write_json(_manifest_path(config, stage), manifest.to_record())
    return manifest
