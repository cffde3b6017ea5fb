"""Dynamic exemplar selection.

Every exemplar in the index is scored against the test constraint with the
similarity appropriate to the task, then the k best are returned. Scoring is
a full scan: the corpora involved are small enough that determinism and
testability beat an approximate index.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import EmptyIndexError, InvalidInputError
from .geometry import BoundingBox, DomainConfig, Layout, box_iou
from .matching import hungarian_max_matching, matching_by_label
from .serde import (
    ConstraintSpec,
    ContentConstraint,
    NoisyLayout,
    PartialLayout,
    RelationConstraint,
    TaskKind,
    TextConstraint,
    TypeConstraint,
    TypeSizeConstraint,
    check_task_constraint,
)

logger = logging.getLogger(__name__)

__all__ = [
    "Exemplar",
    "ExemplarIndex",
    "SimilarityScore",
    "hungarian_max_matching",
    "explicit_constraint_similarity",
    "content_similarity",
    "text_similarity",
    "score_exemplars",
    "select_top_k",
]


@dataclass(frozen=True)
class Exemplar:
    """One (input constraint, output layout) pair from the corpus."""

    id: str
    constraint: ConstraintSpec
    layout: Layout
    embedding: Optional[tuple[float, ...]] = None
    saliency_box: Optional[BoundingBox] = None


@dataclass(frozen=True)
class ExemplarIndex:
    """Immutable retrieval corpus for one task on one domain."""

    domain: DomainConfig
    task: TaskKind
    exemplars: tuple[Exemplar, ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for ex in self.exemplars:
            check_task_constraint(self.task, ex.constraint)
            if ex.id in seen:
                raise InvalidInputError(f"duplicate exemplar id {ex.id!r}")
            seen.add(ex.id)

    def __len__(self) -> int:
        return len(self.exemplars)


@dataclass(frozen=True)
class SimilarityScore:
    """Score of one exemplar against the test constraint."""

    exemplar_id: str
    score: float


def _typed_points(constraint: ConstraintSpec) -> list[tuple[str, tuple[float, ...]]]:
    """Per-element (type, geometric attributes) pairs for explicit similarity.

    The attribute vector is empty when only types are constrained, (w, h)
    when sizes are given, and (l, t, w, h) when full boxes are (partial
    layouts and noisy layouts).
    """
    if isinstance(constraint, (TypeConstraint, RelationConstraint)):
        return [(t, ()) for t in constraint.types]
    if isinstance(constraint, TypeSizeConstraint):
        return [(t, (float(w), float(h))) for t, w, h in constraint.items]
    if isinstance(constraint, (PartialLayout, NoisyLayout)):
        return [
            (
                e.type_label,
                (
                    float(e.box.left),
                    float(e.box.top),
                    float(e.box.width),
                    float(e.box.height),
                ),
            )
            for e in constraint.elements
        ]
    raise InvalidInputError(
        f"{type(constraint).__name__} has no element-wise geometric form"
    )


def explicit_constraint_similarity(
    x_test: ConstraintSpec, x_j: ConstraintSpec, task: TaskKind
) -> float:
    """Average matched-pair weight between two element-wise constraints.

    Pairs of same-type constraint elements get weight 2^(-d) where d is the
    Euclidean distance between their geometric attribute vectors; pairs with
    different types get 0. A maximum-weight matching is computed and the
    score is the mean weight of matched pairs with positive weight, or 0
    when no same-type pair was matched. Always in [0, 1].
    """
    check_task_constraint(task, x_test)
    check_task_constraint(task, x_j)
    points_a = _typed_points(x_test)
    points_b = _typed_points(x_j)
    if not points_a or not points_b:
        return 0.0
    pairs = matching_by_label(
        [t for t, _ in points_a],
        [t for t, _ in points_b],
        lambda i, j: _pair_weight(points_a[i][1], points_b[j][1]),
    )
    weights = [_pair_weight(points_a[i][1], points_b[j][1]) for i, j in pairs]
    weights = [w for w in weights if w > 0.0]
    if not weights:
        return 0.0
    return sum(weights) / len(weights)


def _pair_weight(g_a: tuple[float, ...], g_b: tuple[float, ...]) -> float:
    distance = math.dist(g_a, g_b)
    return 2.0 ** (-distance)


def content_similarity(m_test: BoundingBox, m_j: BoundingBox) -> float:
    """IoU of two rectified saliency boxes."""
    return box_iou(m_test, m_j)


def text_similarity(n_test: Sequence[float], n_j: Sequence[float]) -> float:
    """Cosine similarity of two text embedding vectors, in [-1, 1]."""
    if len(n_test) != len(n_j):
        raise InvalidInputError(
            f"embedding dimensions differ: {len(n_test)} vs {len(n_j)}"
        )
    norm_a = math.sqrt(sum(v * v for v in n_test))
    norm_b = math.sqrt(sum(v * v for v in n_j))
    if norm_a == 0.0 or norm_b == 0.0:
        raise InvalidInputError("cannot take cosine similarity with a zero vector")
    dot = sum(a * b for a, b in zip(n_test, n_j))
    return dot / (norm_a * norm_b)


def _score_one(
    x_test: ConstraintSpec,
    exemplar: Exemplar,
    task: TaskKind,
    query_embedding: Optional[Sequence[float]],
) -> float:
    if task is TaskKind.CONTENT_AWARE:
        assert isinstance(x_test, ContentConstraint)
        assert isinstance(exemplar.constraint, ContentConstraint)
        return content_similarity(x_test.box, exemplar.constraint.box)
    if task is TaskKind.TEXT_TO_LAYOUT:
        if query_embedding is None:
            raise InvalidInputError(
                "text-to-layout retrieval needs the query text's embedding"
            )
        if exemplar.embedding is None:
            raise InvalidInputError(
                f"exemplar {exemplar.id!r} has no cached embedding; re-run ingest"
            )
        return text_similarity(query_embedding, exemplar.embedding)
    return explicit_constraint_similarity(x_test, exemplar.constraint, task)


def score_exemplars(
    x_test: ConstraintSpec,
    index: ExemplarIndex,
    query_embedding: Optional[Sequence[float]] = None,
) -> list[SimilarityScore]:
    """Similarity of every index exemplar to the test constraint, index order."""
    check_task_constraint(index.task, x_test)
    return [
        SimilarityScore(ex.id, _score_one(x_test, ex, index.task, query_embedding))
        for ex in index.exemplars
    ]


def select_top_k(
    x_test: ConstraintSpec,
    index: ExemplarIndex,
    k: int,
    query_embedding: Optional[Sequence[float]] = None,
) -> list[Exemplar]:
    """The k most similar exemplars, best first; id ascending breaks ties.

    Returns the whole index (with a logged warning) when it holds fewer than
    k exemplars. Text-to-layout queries must pass the embedding of the query
    text since the constraint itself carries only the raw string.
    """
    if k < 1:
        raise InvalidInputError(f"k must be at least 1, got {k}")
    if not index.exemplars:
        raise EmptyIndexError("cannot retrieve from an empty exemplar index")
    scores = score_exemplars(x_test, index, query_embedding)
    by_id = {ex.id: ex for ex in index.exemplars}
    ranked = sorted(scores, key=lambda s: (-s.score, s.exemplar_id))
    if len(ranked) < k:
        logger.warning(
            "index holds %d exemplars but %d were requested; returning all",
            len(ranked),
            k,
        )
    return [by_id[s.exemplar_id] for s in ranked[:k]]
