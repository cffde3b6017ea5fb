"""Candidate ranking: pick the best of the L sampled layouts.

Each candidate gets a quality score q, a weighted sum of alignment, overlap,
and one minus the best IoU against the reference layouts. Lower q is better;
the head of the ranked list is the pipeline's final output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import InvalidInputError, NoValidCandidateError
from .geometry import Layout
from .metrics import alignment_score, max_iou, overlap_score


@dataclass(frozen=True)
class RankWeights:
    """Non-negative weights for the three quality terms; not all zero."""

    align: float = 0.2
    overlap: float = 0.2
    iou: float = 0.6

    def __post_init__(self) -> None:
        for name, value in (
            ("align", self.align),
            ("overlap", self.overlap),
            ("iou", self.iou),
        ):
            if value < 0:
                raise InvalidInputError(f"rank weight {name} must be >= 0, got {value}")
        if self.align == 0 and self.overlap == 0 and self.iou == 0:
            raise InvalidInputError("rank weights must not all be zero")


@dataclass(frozen=True)
class RankedCandidate:
    """A scored candidate; source_index is its position among the samples."""

    layout: Layout
    align: float
    overlap: float
    miou: float
    q: float
    source_index: int


def rank_candidates(
    candidates: Sequence[Layout],
    references: Sequence[Layout],
    weights: RankWeights = RankWeights(),
    source_indices: Optional[Sequence[int]] = None,
) -> list[RankedCandidate]:
    """Score candidates and sort ascending by q; ties keep sample order.

    q = w_align * align + w_overlap * overlap + w_iou * (1 - miou), where
    miou is each candidate's best pairwise IoU against the references.
    source_indices lets callers preserve the original sample positions when
    unparseable candidates were dropped before ranking.
    """
    if not candidates:
        raise NoValidCandidateError("no candidates to rank")
    if source_indices is None:
        source_indices = range(len(candidates))
    elif len(source_indices) != len(candidates):
        raise InvalidInputError(
            f"{len(source_indices)} source indices for {len(candidates)} candidates"
        )
    ranked = []
    for layout, source_index in zip(candidates, source_indices):
        align = alignment_score(layout)
        overlap = overlap_score(layout)
        miou = max_iou(layout, references)
        q = weights.align * align + weights.overlap * overlap + weights.iou * (1.0 - miou)
        ranked.append(
            RankedCandidate(
                layout=layout,
                align=align,
                overlap=overlap,
                miou=miou,
                q=q,
                source_index=source_index,
            )
        )
    ranked.sort(key=lambda c: (c.q, c.source_index))
    return ranked
