"""Command-line driver: one subcommand per pipeline stage.

Usage: ``planforge <stage> --config path [--force] [--seed n]`` plus
stage-specific overrides that rewrite the matching config section before
the run (so manifests record what actually executed). Subcommand names are
dashed; underscore spellings are accepted as aliases.

Exit codes: 0 ok, 2 validation error, 3 dependency error, 4 transport error.
"""

from __future__ import annotations

import json
import logging
import sys
from typing import Callable

import click

from .errors import (
    DependencyError,
    PlanforgeError,
    TransportError,
    ValidationError,
)
from .pipeline import PipelineConfig, Stage, run_stage

EXIT_VALIDATION = 2
EXIT_DEPENDENCY = 3
EXIT_TRANSPORT = 4


class _AliasedGroup(click.Group):
    """Resolve underscore-spelled command names to their dashed forms."""

    def get_command(self, ctx: click.Context, cmd_name: str):
        return super().get_command(ctx, cmd_name.replace("_", "-"))


@click.group(cls=_AliasedGroup)
@click.option("--verbose", is_flag=True, help="Log debug detail to stderr.")
def main(verbose: bool) -> None:
    """Corpus-to-mixture pipeline for planning-augmented writing data."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _execute(
    stage: Stage,
    config_path: str,
    force: bool,
    seed: int | None,
    mutate: Callable[[dict], None] | None = None,
) -> None:
    try:
        config = PipelineConfig.load(config_path)
        if mutate is not None:
            mutate(config.raw)
        manifest = run_stage(stage, config, force=force, seed=seed)
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except DependencyError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_DEPENDENCY)
    except TransportError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_TRANSPORT)
    except PlanforgeError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    if manifest.skipped:
        click.echo(f"{stage.value}: up to date")
    else:
        counts = " ".join(f"{k}={v}" for k, v in sorted(manifest.counts.items()))
        click.echo(f"{stage.value}: done ({counts})")
    if stage is Stage.EVAL_ROUGE and not manifest.skipped:
        report_path = PipelineConfig.load(config_path).workdir / "eval" / "rouge_report.json"
        with open(report_path, "r", encoding="utf-8") as fh:
            click.echo(json.dumps(json.load(fh), sort_keys=True))


def _common(fn: Callable) -> Callable:
    fn = click.option("--seed", type=int, default=None, help="Override the stage's seed.")(fn)
    fn = click.option("--force", is_flag=True, help="Run even if digests are stale or fresh.")(fn)
    fn = click.option(
        "--config", "config_path", required=True, type=click.Path(), help="Pipeline config JSON."
    )(fn)
    return fn


def _csv_ints(value: str, flag: str, n: int) -> list[int]:
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != n or not all(p.lstrip("-").isdigit() for p in parts):
        raise click.UsageError(f"{flag} expects {n} comma-separated integers, got {value!r}")
    return [int(p) for p in parts]


@main.command()
@_common
@click.option("--min-words", type=int, default=None, help="Keep docs with at least this many words.")
@click.option(
    "--require-sections/--no-require-sections",
    "require_sections",
    default=None,
    help="Require a non-empty section list.",
)
@click.option("--sizes", default=None, help="Split sizes as train,validation,evaluation.")
def ingest(
    config_path: str,
    force: bool,
    seed: int | None,
    min_words: int | None,
    require_sections: bool | None,
    sizes: str | None,
) -> None:
    """Parse, filter and split the corpus."""

    def mutate(raw: dict) -> None:
        section = raw.setdefault("corpus", {})
        if min_words is not None:
            section["min_words"] = min_words
        if require_sections is not None:
            section["require_sections"] = require_sections
        if sizes is not None:
            section["split_sizes"] = _csv_ints(sizes, "--sizes", 3)

    _execute(Stage.INGEST, config_path, force, seed, mutate)


@main.command()
@_common
def plan(config_path: str, force: bool, seed: int | None) -> None:
    """Generate intermediate-step candidates for the train split."""
    _execute(Stage.PLAN, config_path, force, seed)


@main.command()
@_common
def score(config_path: str, force: bool, seed: int | None) -> None:
    """Score candidates and select the best step per document and kind."""
    _execute(Stage.SCORE, config_path, force, seed)


@main.command()
@_common
@click.option("--tasks", default=None, help="Comma-separated task forms: direct,plan_out,plan_in.")
@click.option("--weights", default=None, help="Per-task weights, e.g. direct=1.0,plan_out=0.5.")
@click.option("--limits", default=None, help="Token limits as input,output.")
def mixture(
    config_path: str,
    force: bool,
    seed: int | None,
    tasks: str | None,
    weights: str | None,
    limits: str | None,
) -> None:
    """Assemble the weighted, interleaved training mixture."""

    def mutate(raw: dict) -> None:
        section = raw.setdefault("mixture", {})
        if tasks is not None:
            section["tasks"] = [t.strip() for t in tasks.split(",") if t.strip()]
        if weights is not None:
            parsed = {}
            for pair in weights.split(","):
                if "=" not in pair:
                    raise click.UsageError(
                        f"--weights expects task=weight pairs, got {pair!r}"
                    )
                task, value = pair.split("=", 1)
                try:
                    parsed[task.strip()] = float(value)
                except ValueError:
                    raise click.UsageError(f"bad weight {value!r} for task {task!r}")
            section["weights"] = parsed
        if limits is not None:
            input_limit, output_limit = _csv_ints(limits, "--limits", 2)
            section["input_limit"] = input_limit
            section["output_limit"] = output_limit

    _execute(Stage.MIXTURE, config_path, force, seed, mutate)


@main.command("eval-rouge")
@_common
@click.option("--candidates", default=None, help="JSONL of model outputs with a 'text' field.")
@click.option("--references", default=None, help="JSONL of references with a 'text' field.")
@click.option("--pairs", default=None, help="JSONL with 'candidate' and 'reference' fields.")
def eval_rouge(
    config_path: str,
    force: bool,
    seed: int | None,
    candidates: str | None,
    references: str | None,
    pairs: str | None,
) -> None:
    """Score candidate articles against references with ROUGE-1/2/L/Lsum."""

    def mutate(raw: dict) -> None:
        section = raw.setdefault("eval_rouge", {})
        if candidates is not None:
            section["candidates_path"] = candidates
        if references is not None:
            section["references_path"] = references
            section.pop("references_split", None)
            section.pop("pairs_path", None)
        if pairs is not None:
            section["pairs_path"] = pairs

    _execute(Stage.EVAL_ROUGE, config_path, force, seed, mutate)


@main.command("eval-sxs")
@_common
def eval_sxs(config_path: str, force: bool, seed: int | None) -> None:
    """Run the flip-debiased side-by-side autorater comparison."""
    _execute(Stage.EVAL_SXS, config_path, force, seed)


@main.command()
@_common
def report(config_path: str, force: bool, seed: int | None) -> None:
    """Combine stage counts and evaluation results into one report."""
    _execute(Stage.REPORT, config_path, force, seed)


if __name__ == "__main__":
    main()
