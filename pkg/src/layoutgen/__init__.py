"""Retrieval-augmented layout generation for graphic design tasks.

The package turns a corpus of (constraint, layout) pairs into an exemplar
index, builds few-shot prompts for a language model, parses the returned
HTML fragments back into layouts, and picks the best candidate with a
quality ranker. Mock providers make the whole pipeline runnable offline.
"""

from .config import PipelineConfig, ProviderSettings, load_config, with_seed
from .corpus import IngestReport, Sample, build_sample, ingest, load_index, save_index
from .errors import (
    DataError,
    EmptyCandidateError,
    EmptyIndexError,
    EmptySaliencyError,
    InvalidInputError,
    LayoutGenError,
    NoValidCandidateError,
    ProviderError,
    UsageError,
)
from .gateway import (
    CachedEmbeddingProvider,
    EchoMockProvider,
    GenerationParams,
    HashEmbeddingProvider,
    NoisyMockProvider,
    OpenAICompatibleProvider,
    PromptBundle,
    ProviderConfig,
    ReplayProvider,
    build_prompt,
    complete,
    embed,
    prompt_hash,
)
from .geometry import (
    BoundingBox,
    CanvasSpec,
    DomainConfig,
    Element,
    Layout,
    box_iou,
    discretize_layout,
    get_domain,
    layout_from_tuples,
)
from .metrics import (
    alignment_score,
    docsim,
    layout_pair_iou,
    max_iou,
    overlap_score,
    text_layout_violations,
    violation_rate,
)
from .pipeline import (
    GenerateSummary,
    make_completion_provider,
    make_embedding_provider,
    run_evaluate,
    run_generate,
    run_render,
    run_seed_variance,
)
from .ranker import RankedCandidate, RankWeights, rank_candidates
from .render import render_svg
from .retrieval import (
    Exemplar,
    ExemplarIndex,
    content_similarity,
    explicit_constraint_similarity,
    score_exemplars,
    select_top_k,
    text_similarity,
)
from .saliency import SaliencyMap, read_pgm, rectify, spectral_residual_saliency
from .serde import (
    ConstraintSpec,
    ContentConstraint,
    NoisyLayout,
    PartialLayout,
    Relation,
    RelationConstraint,
    RelationPredicate,
    TaskKind,
    TextConstraint,
    TypeConstraint,
    TypeSizeConstraint,
    parse_layout_html,
    serialize_constraint,
    serialize_layout_html,
    serialize_preamble,
)

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "CachedEmbeddingProvider",
    "CanvasSpec",
    "ConstraintSpec",
    "ContentConstraint",
    "DataError",
    "DomainConfig",
    "EchoMockProvider",
    "Element",
    "EmptyCandidateError",
    "EmptyIndexError",
    "EmptySaliencyError",
    "Exemplar",
    "ExemplarIndex",
    "GenerateSummary",
    "GenerationParams",
    "HashEmbeddingProvider",
    "IngestReport",
    "InvalidInputError",
    "Layout",
    "LayoutGenError",
    "NoValidCandidateError",
    "NoisyLayout",
    "NoisyMockProvider",
    "OpenAICompatibleProvider",
    "PartialLayout",
    "PipelineConfig",
    "PromptBundle",
    "ProviderConfig",
    "ProviderError",
    "ProviderSettings",
    "RankWeights",
    "RankedCandidate",
    "Relation",
    "RelationConstraint",
    "RelationPredicate",
    "ReplayProvider",
    "SaliencyMap",
    "Sample",
    "TaskKind",
    "TextConstraint",
    "TypeConstraint",
    "TypeSizeConstraint",
    "UsageError",
    "alignment_score",
    "box_iou",
    "build_prompt",
    "build_sample",
    "complete",
    "content_similarity",
    "discretize_layout",
    "docsim",
    "embed",
    "explicit_constraint_similarity",
    "get_domain",
    "ingest",
    "layout_from_tuples",
    "layout_pair_iou",
    "load_config",
    "load_index",
    "make_completion_provider",
    "make_embedding_provider",
    "max_iou",
    "overlap_score",
    "parse_layout_html",
    "prompt_hash",
    "rank_candidates",
    "read_pgm",
    "rectify",
    "render_svg",
    "run_evaluate",
    "run_generate",
    "run_render",
    "run_seed_variance",
    "save_index",
    "score_exemplars",
    "select_top_k",
    "serialize_constraint",
    "serialize_layout_html",
    "serialize_preamble",
    "spectral_residual_saliency",
    "text_layout_violations",
    "text_similarity",
    "violation_rate",
    "with_seed",
]
