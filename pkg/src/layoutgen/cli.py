"""Command-line interface: ingest, generate, evaluate, render.

Every global option maps onto a config key, so flags and a TOML file
compose; flags win. Exit codes: 0 success, 1 usage error, 2 provider
failure, 3 data error.
"""

from __future__ import annotations

import logging
import sys
from typing import Optional

import click

from .config import COMPLETION_KINDS, PipelineConfig, load_config
from .corpus import ingest as corpus_ingest
from .errors import LayoutGenError, UsageError
from .pipeline import (
    make_embedding_provider,
    run_evaluate,
    run_generate,
    run_render,
    run_seed_variance,
)
from .serde import TaskKind

_TASK_NAMES = [task.value for task in TaskKind]


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path", default=None, help="TOML config file.")
@click.option(
    "--task", type=click.Choice(_TASK_NAMES), default=None, help="Generation task."
)
@click.option(
    "--domain", default=None, help="Domain preset: rico, publaynet, posterlayout, webui."
)
@click.option("--index", "index_path", default=None, help="Exemplar index file.")
@click.option("--output-dir", default=None, help="Directory for results and reports.")
@click.option("--seed", type=int, default=None, help="Base seed for shuffles and mocks.")
@click.option(
    "--num-exemplars",
    type=int,
    default=None,
    help="Exemplars per prompt (0 disables retrieval).",
)
@click.option(
    "--num-samples", type=int, default=None, help="Completions requested per sample."
)
@click.option("--temperature", type=float, default=None, help="Sampling temperature.")
@click.option(
    "--provider",
    type=click.Choice(COMPLETION_KINDS),
    default=None,
    help="Completion backend.",
)
@click.option("--replay-file", default=None, help="Fixture file for the replay backend.")
@click.option(
    "--include-headers/--no-headers",
    default=None,
    help="Toggle the Exemplar/Test Sample header lines in prompts.",
)
@click.option(
    "--generation-cue",
    default=None,
    help="Extra line appended after the test constraint.",
)
@click.option(
    "--saliency-threshold",
    type=float,
    default=None,
    help="Threshold for rectifying saliency maps.",
)
@click.option("--image-root", default=None, help="Base directory for record images.")
@click.option("-v", "--verbose", is_flag=True, help="Log at DEBUG instead of WARNING.")
@click.pass_context
def cli(
    ctx: click.Context,
    config_path: Optional[str],
    task: Optional[str],
    domain: Optional[str],
    index_path: Optional[str],
    output_dir: Optional[str],
    seed: Optional[int],
    num_exemplars: Optional[int],
    num_samples: Optional[int],
    temperature: Optional[float],
    provider: Optional[str],
    replay_file: Optional[str],
    include_headers: Optional[bool],
    generation_cue: Optional[str],
    saliency_threshold: Optional[float],
    image_root: Optional[str],
    verbose: bool,
) -> None:
    """Retrieval-augmented layout generation toolkit."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    overrides = {
        "task": task,
        "domain": domain,
        "index": index_path,
        "output_dir": output_dir,
        "image_root": image_root,
        "generation.seed": seed,
        "generation.num_exemplars": num_exemplars,
        "generation.num_samples": num_samples,
        "generation.temperature": temperature,
        "provider.kind": provider,
        "provider.replay_file": replay_file,
        "prompt.include_headers": include_headers,
        "prompt.generation_cue": generation_cue,
        "saliency.threshold": saliency_threshold,
    }
    ctx.obj = load_config(config_path, overrides)


@cli.command()
@click.argument("corpus")
@click.pass_obj
def ingest(config: PipelineConfig, corpus: str) -> None:
    """Build the exemplar index from a CORPUS file (one JSON record per line)."""
    embedder = (
        make_embedding_provider(config.provider)
        if config.task is TaskKind.TEXT_TO_LAYOUT
        else None
    )
    report = corpus_ingest(
        corpus,
        config.task,
        config.domain,
        config.index_path,
        embedding_provider=embedder,
        saliency_threshold=config.saliency_threshold,
        image_root=config.image_root,
    )
    if embedder is not None:
        embedder.save()
    for message in report.skipped:
        click.echo(f"skipped: {message}", err=True)
    click.echo(
        f"ingested {report.kept} of {report.total} records -> {config.index_path}"
    )


@cli.command()
@click.argument("tests")
@click.pass_obj
def generate(config: PipelineConfig, tests: str) -> None:
    """Generate layouts for every sample in the TESTS file."""
    summary = run_generate(tests, config)
    click.echo(
        f"generated {summary.ok} ok / {summary.failed} failed "
        f"of {summary.total} samples -> {summary.results_path}"
    )
    click.echo(f"SVG renderings in {summary.svg_dir}")


@cli.command()
@click.argument("results", required=False, default=None)
@click.option(
    "--references", default=None, help="Reference corpus for the mIoU pool."
)
@click.option(
    "--seeds",
    type=int,
    default=None,
    help="Rerun generation with this many seeds and report metric stability.",
)
@click.option(
    "--tests", default=None, help="Test file for --seeds reruns (required with it)."
)
@click.pass_obj
def evaluate(
    config: PipelineConfig,
    results: Optional[str],
    references: Optional[str],
    seeds: Optional[int],
    tests: Optional[str],
) -> None:
    """Score a RESULTS file, or rerun with --seeds K for a stability report."""
    if seeds is not None:
        if tests is None:
            raise UsageError("--seeds requires --tests to rerun generation")
        summary = run_seed_variance(tests, config, seeds, references_path=references)
        for name, row in sorted(summary["stability"].items()):
            click.echo(
                f"{name}: mean {row['mean']:.4f}, variance {row['variance']:.6f}"
            )
        click.echo(f"seed variance summary in {config.output_dir}")
        return
    if results is None:
        raise UsageError("evaluate needs a results file (or --seeds with --tests)")
    report = run_evaluate(results, config, references_path=references)
    with open(f"{config.output_dir}/report.txt", "r", encoding="utf-8") as fh:
        click.echo(fh.read(), nl=False)
    counts = report["counts"]
    click.echo(f"full report in {config.output_dir} ({counts['total']} samples)")


@cli.command()
@click.argument("input_file")
@click.option("--out", "out_dir", default=None, help="Directory for the SVG files.")
@click.pass_obj
def render(config: PipelineConfig, input_file: str, out_dir: Optional[str]) -> None:
    """Render layouts from a results or corpus file to SVG files."""
    target = out_dir or f"{config.output_dir}/svg"
    written = run_render(input_file, config, target)
    click.echo(f"wrote {written} SVG files to {target}")


def main(argv: Optional[list[str]] = None) -> int:
    """Entry point that maps typed errors to the documented exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except LayoutGenError as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.exit_code
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
