"""End-to-end orchestration behind the CLI verbs.

generate: retrieve exemplars, build a prompt, sample completions, parse,
rank, and write one result line plus one SVG per test sample. evaluate:
recompute metrics over a result file and emit a JSON report, a text table,
and histogram figures. Both are deterministic with the mock providers.
"""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .config import PipelineConfig, ProviderSettings, with_seed
from .corpus import (
    Sample,
    build_sample,
    constraint_from_json,
    constraint_to_json,
    layout_from_json,
    layout_to_json,
    load_index,
    load_samples,
)
from .errors import (
    DataError,
    EmptyCandidateError,
    NoValidCandidateError,
)
from .figures import save_metric_histograms, save_seed_variance
from .gateway import (
    CachedEmbeddingProvider,
    CompletionProvider,
    EchoMockProvider,
    EmbeddingProvider,
    HashEmbeddingProvider,
    NoisyMockProvider,
    OpenAICompatibleProvider,
    ReplayProvider,
    build_prompt,
    complete,
    prompt_hash,
)
from .geometry import Layout
from .metrics import (
    alignment_score,
    docsim,
    max_iou,
    overlap_score,
    text_layout_violations,
    violation_rate,
)
from .ranker import RankedCandidate, RankWeights, rank_candidates
from .render import render_svg
from .retrieval import Exemplar, ExemplarIndex, select_top_k
from .rng import mix_seed
from .serde import TaskKind, parse_layout_html

logger = logging.getLogger(__name__)

_SAFE_ID = re.compile(r"[^-._a-zA-Z0-9]+")


def make_embedding_provider(settings: ProviderSettings) -> EmbeddingProvider:
    """The configured embedding backend, wrapped in a cache when one is set."""
    if settings.embedding_kind == "openai":
        provider: EmbeddingProvider = OpenAICompatibleProvider(settings.http)
    else:
        provider = HashEmbeddingProvider()
    if settings.embedding_cache:
        return CachedEmbeddingProvider(provider, settings.embedding_cache)
    return CachedEmbeddingProvider(provider)


def make_completion_provider(settings: ProviderSettings) -> CompletionProvider:
    """The configured completion backend."""
    if settings.kind == "openai":
        return OpenAICompatibleProvider(settings.http)
    if settings.kind == "replay":
        return ReplayProvider(settings.replay_file)
    if settings.kind == "noisy":
        return NoisyMockProvider()
    return EchoMockProvider()


def _safe_filename(sample_id: str) -> str:
    return _SAFE_ID.sub("_", sample_id) or "sample"


def _rank_reference_free(
    candidates: Sequence[Layout],
    weights: RankWeights,
    source_indices: Sequence[int],
) -> list[RankedCandidate]:
    """Zero-shot fallback: no retrieved layouts to compare against.

    The IoU term has no reference set, so every candidate takes miou = 0 and
    the order is driven by alignment and overlap alone.
    """
    ranked = []
    for layout, source_index in zip(candidates, source_indices):
        align = alignment_score(layout)
        overlap = overlap_score(layout)
        q = weights.align * align + weights.overlap * overlap + weights.iou * 1.0
        ranked.append(
            RankedCandidate(
                layout=layout,
                align=align,
                overlap=overlap,
                miou=0.0,
                q=q,
                source_index=source_index,
            )
        )
    ranked.sort(key=lambda c: (c.q, c.source_index))
    return ranked


def _generate_one(
    sample: Sample,
    embedding: tuple[float, ...],
    ordinal: int,
    index: ExemplarIndex,
    config: PipelineConfig,
    provider: CompletionProvider,
) -> dict:
    """Run the full pipeline for one test sample; never raises on bad output."""
    params = config.generation
    warnings: list[str] = []

    exemplars: list[Exemplar] = []
    if params.num_exemplars > 0:
        exemplars = select_top_k(
            sample.constraint,
            index,
            params.num_exemplars,
            query_embedding=embedding or None,
        )
    bundle = build_prompt(
        config.task,
        config.domain,
        exemplars,
        sample.constraint,
        seed=mix_seed(params.seed, ordinal),
        include_headers=config.include_headers,
        generation_cue=config.generation_cue,
    )
    completions = complete(bundle, params, provider)

    layouts: list[Layout] = []
    source_indices: list[int] = []
    for i, completion in enumerate(completions):
        try:
            layout, parse_warnings = parse_layout_html(completion, config.domain)
        except EmptyCandidateError as exc:
            warnings.append(f"candidate {i}: {exc}")
            continue
        for w in parse_warnings:
            warnings.append(f"candidate {i}: {w.kind}: {w.detail}")
        layouts.append(layout)
        source_indices.append(i)

    record: dict = {
        "id": sample.id,
        "constraint": constraint_to_json(sample.constraint),
        "reference": layout_to_json(sample.reference) if sample.reference else None,
        "exemplar_ids": [ex.id for ex in exemplars],
        "prompting_layouts": [layout_to_json(ex.layout) for ex in exemplars],
        "prompt_hash": prompt_hash(bundle),
        "warnings": warnings,
    }
    if not layouts:
        record["status"] = "failed"
        record["reason"] = "no candidate contained a parseable layout"
        return record

    references = [ex.layout for ex in exemplars]
    if references:
        ranked = rank_candidates(layouts, references, config.rank_weights, source_indices)
    else:
        ranked = _rank_reference_free(layouts, config.rank_weights, source_indices)

    record["status"] = "ok"
    record["best"] = layout_to_json(ranked[0].layout)
    record["candidates"] = [
        {
            "source_index": c.source_index,
            "align": c.align,
            "overlap": c.overlap,
            "miou": c.miou,
            "q": c.q,
            "layout": layout_to_json(c.layout),
        }
        for c in ranked
    ]
    return record


@dataclass(frozen=True)
class GenerateSummary:
    """Counts from one generation run plus where the results went."""

    total: int
    ok: int
    failed: int
    results_path: str
    svg_dir: str


def run_generate(
    tests_path: str,
    config: PipelineConfig,
    index: Optional[ExemplarIndex] = None,
    provider: Optional[CompletionProvider] = None,
) -> GenerateSummary:
    """Generate layouts for every test sample and write results + SVGs."""
    if index is None:
        index = load_index(config.index_path)
    if index.task is not config.task:
        raise DataError(
            f"index task {index.task.value!r} does not match config task "
            f"{config.task.value!r}"
        )
    if index.domain.canvas != config.domain.canvas:
        raise DataError(
            f"index canvas {index.domain.canvas.width}x{index.domain.canvas.height} "
            f"does not match config canvas "
            f"{config.domain.canvas.width}x{config.domain.canvas.height}"
        )
    if provider is None:
        provider = make_completion_provider(config.provider)
    embedder = (
        make_embedding_provider(config.provider)
        if config.task is TaskKind.TEXT_TO_LAYOUT
        else None
    )

    samples, embeddings, report = load_samples(
        tests_path,
        config.task,
        config.domain,
        require_layout=False,
        embedding_provider=embedder,
        saliency_threshold=config.saliency_threshold,
        image_root=config.image_root,
    )
    if not samples:
        raise DataError(f"{tests_path}: no valid test samples (of {report.total})")

    os.makedirs(config.output_dir, exist_ok=True)
    svg_dir = os.path.join(config.output_dir, "svg")
    os.makedirs(svg_dir, exist_ok=True)
    results_path = os.path.join(config.output_dir, "results.jsonl")

    ok = 0
    failed = 0
    lines = []
    for ordinal, (sample, embedding) in enumerate(zip(samples, embeddings)):
        try:
            record = _generate_one(sample, embedding, ordinal, index, config, provider)
        except NoValidCandidateError as exc:
            record = {
                "id": sample.id,
                "constraint": constraint_to_json(sample.constraint),
                "reference": (
                    layout_to_json(sample.reference) if sample.reference else None
                ),
                "status": "failed",
                "reason": str(exc),
                "warnings": [],
            }
        if record["status"] == "ok":
            ok += 1
            svg = render_svg(layout_from_json(record["best"]), config.domain)
            svg_path = os.path.join(svg_dir, _safe_filename(sample.id) + ".svg")
            with open(svg_path, "w", encoding="utf-8") as fh:
                fh.write(svg)
        else:
            failed += 1
            logger.warning("sample %s failed: %s", sample.id, record.get("reason"))
        lines.append(json.dumps(record, sort_keys=True))

    with open(results_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    if isinstance(embedder, CachedEmbeddingProvider):
        embedder.save()
    logger.info("generated %d ok / %d failed -> %s", ok, failed, results_path)
    return GenerateSummary(
        total=len(samples),
        ok=ok,
        failed=failed,
        results_path=results_path,
        svg_dir=svg_dir,
    )


def _load_results(path: str) -> list[dict]:
    records = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read results file {path}: {exc}") from exc
    with fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_number}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict) or "status" not in record:
                raise DataError(f"{path}:{line_number}: not a result record")
            records.append(record)
    if not records:
        raise DataError(f"{path}: results file is empty")
    return records


def _label_multiset(record: dict, best: Layout) -> tuple[str, ...]:
    """The sample's element-type multiset, for picking comparable references."""
    constraint = constraint_from_json(record["constraint"])
    types = getattr(constraint, "types", None)
    if record.get("reference"):
        return tuple(sorted(layout_from_json(record["reference"]).labels()))
    if types:
        return tuple(sorted(types))
    return tuple(sorted(best.labels()))


def _miou_references(
    record: dict,
    best: Layout,
    reference_layouts: Optional[list[Layout]],
) -> list[Layout]:
    if reference_layouts:
        wanted = _label_multiset(record, best)
        matching = [
            layout
            for layout in reference_layouts
            if tuple(sorted(layout.labels())) == wanted
        ]
        if matching:
            return matching
    prompting = [layout_from_json(raw) for raw in record.get("prompting_layouts", [])]
    if prompting:
        return prompting
    if record.get("reference"):
        return [layout_from_json(record["reference"])]
    return []


def run_evaluate(
    results_path: str,
    config: PipelineConfig,
    references_path: Optional[str] = None,
    write_figures: bool = True,
) -> dict:
    """Score a result file; write report.json, report.txt, and histograms."""
    records = _load_results(results_path)

    reference_layouts: Optional[list[Layout]] = None
    if references_path:
        reference_samples, _, _ = load_samples(
            references_path,
            config.task,
            config.domain,
            require_layout=True,
        )
        reference_layouts = [s.reference for s in reference_samples if s.reference]
        if not reference_layouts:
            raise DataError(f"{references_path}: no reference layouts found")

    per_sample = []
    ok_records = 0
    for record in records:
        if record.get("status") != "ok":
            per_sample.append({"id": record.get("id"), "status": "failed"})
            continue
        ok_records += 1
        best = layout_from_json(record["best"])
        constraint = constraint_from_json(record["constraint"])
        reference = (
            layout_from_json(record["reference"]) if record.get("reference") else None
        )

        row: dict = {
            "id": record.get("id"),
            "status": "ok",
            "align": alignment_score(best),
            "overlap": overlap_score(best),
        }
        miou_refs = _miou_references(record, best, reference_layouts)
        row["miou"] = max_iou(best, miou_refs) if miou_refs else None

        if config.task is TaskKind.TEXT_TO_LAYOUT and reference is not None:
            type_rate, pos_size_rate = text_layout_violations(reference, best)
            row["violation_rate"] = type_rate
            row["pos_size_violation_rate"] = pos_size_rate
        else:
            try:
                row["violation_rate"] = violation_rate(
                    config.task,
                    constraint,
                    best,
                    reference=reference,
                    size_tolerance=config.size_relation_tolerance,
                )
            except DataError:
                row["violation_rate"] = None

        prompting = [
            layout_from_json(raw) for raw in record.get("prompting_layouts", [])
        ]
        row["docsim"] = (
            max(docsim(best, layout) for layout in prompting) if prompting else None
        )
        per_sample.append(row)

    metric_names = [
        "align",
        "overlap",
        "miou",
        "violation_rate",
        "pos_size_violation_rate",
        "docsim",
    ]
    values_by_metric = {
        name: [
            row[name]
            for row in per_sample
            if row.get("status") == "ok" and row.get(name) is not None
        ]
        for name in metric_names
    }
    means = {
        name: (sum(values) / len(values) if values else None)
        for name, values in values_by_metric.items()
    }
    report = {
        "counts": {
            "total": len(records),
            "ok": ok_records,
            "failed": len(records) - ok_records,
        },
        "means": means,
        "samples": per_sample,
    }

    os.makedirs(config.output_dir, exist_ok=True)
    report_path = os.path.join(config.output_dir, "report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    table_path = os.path.join(config.output_dir, "report.txt")
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write(format_report_table(report))
    if write_figures:
        figure_path = os.path.join(config.output_dir, "report_histograms.png")
        save_metric_histograms(values_by_metric, figure_path)
    logger.info("evaluation report written to %s", report_path)
    return report


def format_report_table(report: dict) -> str:
    """Plain-text metric table; violation rates shown as percentages.

    The FID column usually reported next to these metrics needs a trained
    feature extractor and is out of scope, so it is omitted.
    """
    means = report["means"]
    counts = report["counts"]

    def fmt(name: str, scale: float = 1.0) -> str:
        value = means.get(name)
        return "-" if value is None else f"{value * scale:.4f}"

    headers = ["mIoU", "Align.", "Overlap", "Vio. %", "Pos&Size %", "DocSim"]
    values = [
        fmt("miou"),
        fmt("align"),
        fmt("overlap"),
        fmt("violation_rate", 100.0),
        fmt("pos_size_violation_rate", 100.0),
        fmt("docsim"),
    ]
    width = max(len(s) for s in headers + values) + 2
    lines = [
        f"samples: {counts['ok']} ok / {counts['failed']} failed "
        f"/ {counts['total']} total",
        "".join(h.ljust(width) for h in headers).rstrip(),
        "".join(v.ljust(width) for v in values).rstrip(),
        "(FID omitted: requires a trained feature extractor)",
    ]
    return "\n".join(lines) + "\n"


def run_seed_variance(
    tests_path: str,
    config: PipelineConfig,
    seeds: int,
    references_path: Optional[str] = None,
) -> dict:
    """Rerun generation with consecutive seeds and report metric stability.

    Each seed writes its own results/report under output_dir/seed_<s>/; the
    summary (per-seed means, their mean and variance, and an errorbar
    figure) lands in the base output_dir.
    """
    if seeds < 2:
        raise DataError(f"seed variance needs at least 2 seeds, got {seeds}")
    base_seed = config.generation.seed
    seed_values = [base_seed + j for j in range(seeds)]
    means_by_metric: dict[str, list[float]] = {}
    per_seed: dict[str, dict] = {}
    for seed in seed_values:
        seed_config = with_seed(config, seed)
        seed_dir = os.path.join(config.output_dir, f"seed_{seed}")
        seed_config = _with_output_dir(seed_config, seed_dir)
        summary = run_generate(tests_path, seed_config)
        report = run_evaluate(
            summary.results_path,
            seed_config,
            references_path=references_path,
            write_figures=False,
        )
        per_seed[str(seed)] = report["means"]
        for name, value in report["means"].items():
            if value is not None:
                means_by_metric.setdefault(name, []).append(value)

    stability = {}
    for name, values in means_by_metric.items():
        mean = sum(values) / len(values)
        variance = sum((v - mean) ** 2 for v in values) / len(values)
        stability[name] = {"mean": mean, "variance": variance}
    summary_report = {
        "seeds": seed_values,
        "per_seed_means": per_seed,
        "stability": stability,
    }
    os.makedirs(config.output_dir, exist_ok=True)
    summary_path = os.path.join(config.output_dir, "seed_variance.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary_report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    figure_path = os.path.join(config.output_dir, "seed_variance.png")
    save_seed_variance(means_by_metric, seed_values, figure_path)
    logger.info("seed variance summary written to %s", summary_path)
    return summary_report


def _with_output_dir(config: PipelineConfig, output_dir: str) -> PipelineConfig:
    return replace(config, output_dir=output_dir)


def run_render(input_path: str, config: PipelineConfig, out_dir: str) -> int:
    """Render layouts from a results or corpus file to SVG files.

    Result records render their best layout; corpus records render their
    reference layout. Returns the number of files written.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = 0
    try:
        with open(input_path, "r", encoding="utf-8") as fh:
            lines = [line for line in fh if line.strip()]
    except OSError as exc:
        raise DataError(f"cannot read {input_path}: {exc}") from exc
    for line_number, line in enumerate(lines, start=1):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{input_path}:{line_number}: invalid JSON: {exc}") from exc
        if not isinstance(record, dict):
            raise DataError(f"{input_path}:{line_number}: record must be an object")
        if "best" in record and record.get("status") == "ok":
            layout = layout_from_json(record["best"])
            name = record.get("id", f"line{line_number}")
        elif "elements" in record:
            sample, _, _ = build_sample(
                record, config.task, config.domain, require_layout=True
            )
            layout = sample.reference
            name = sample.id
        else:
            logger.warning(
                "%s:%d: no renderable layout; skipping", input_path, line_number
            )
            continue
        svg = render_svg(layout, config.domain)
        path = os.path.join(out_dir, _safe_filename(str(name)) + ".svg")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(svg)
        written += 1
    if written == 0:
        raise DataError(f"{input_path}: nothing renderable found")
    return written
