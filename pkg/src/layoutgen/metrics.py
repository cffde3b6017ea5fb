"""Layout quality metrics: alignment, overlap, pairwise IoU, violations, DocSim.

The same functions feed the candidate ranker and the evaluation report.
All scores are pure functions of their inputs.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import InvalidInputError
from .geometry import BoundingBox, Element, Layout, box_iou, intersection_area
from .matching import matching_by_label
from .serde import (
    CANVAS,
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
    check_task_constraint,
)

#: Slack factor for the size relations (larger/smaller/equal).
SIZE_RELATION_TOLERANCE = 0.1

#: Normalized distance above which a matched pair violates position/size
#: agreement in the text-to-layout breakdown.
POS_SIZE_TOLERANCE = 0.1

# Keeps -log(1 - d) finite at the theoretical extreme d = 1 (two anchors a
# full canvas apart), so reports never carry infinities.
_MAX_ANCHOR_GAP = 1.0 - 1e-12


@dataclass(frozen=True)
class MetricReport:
    """Per-sample metric values; violation_rate and docsim may be absent."""

    align: float
    overlap: float
    miou: float
    violation_rate: Optional[float] = None
    docsim: Optional[float] = None

    def as_dict(self) -> dict:
        return {
            "align": self.align,
            "overlap": self.overlap,
            "miou": self.miou,
            "violation_rate": self.violation_rate,
            "docsim": self.docsim,
        }


def _anchors(e: Element, canvas_w: int, canvas_h: int) -> tuple[float, ...]:
    b = e.box
    return (
        b.left / canvas_w,
        b.center_x / canvas_w,
        b.right / canvas_w,
        b.top / canvas_h,
        b.center_y / canvas_h,
        b.bottom / canvas_h,
    )


def alignment_score(layout: Layout) -> float:
    """How far each element sits from its nearest aligned neighbor.

    Per element, take the minimum over the six anchor kinds (left, x-center,
    right, top, y-center, bottom, in canvas-normalized coordinates) of the
    distance to the closest other element on that anchor; sum -log(1 - d)
    over elements and scale by 100/N. Zero means everything lines up.
    """
    n = len(layout.elements)
    if n < 2:
        return 0.0
    cw, ch = layout.canvas.width, layout.canvas.height
    anchors = [_anchors(e, cw, ch) for e in layout.elements]
    total = 0.0
    for i in range(n):
        best = math.inf
        for j in range(n):
            if i == j:
                continue
            for k in range(6):
                gap = abs(anchors[i][k] - anchors[j][k])
                if gap < best:
                    best = gap
        total += -math.log(1.0 - min(best, _MAX_ANCHOR_GAP))
    return 100.0 * total / n


def overlap_score(layout: Layout) -> float:
    """Mean over ordered pairs (i, j) of intersection(b_i, b_j) / area(b_i).

    Pairs whose source element has zero area are skipped. Zero for layouts
    with fewer than two elements or when every pair is skipped.
    """
    boxes = [e.box for e in layout.elements]
    total = 0.0
    count = 0
    for i, a in enumerate(boxes):
        if a.area == 0:
            continue
        for j, b in enumerate(boxes):
            if i == j:
                continue
            total += intersection_area(a, b) / a.area
            count += 1
    if count == 0:
        return 0.0
    return total / count


def layout_pair_iou(a: Layout, b: Layout) -> float:
    """Best type-respecting element matching, scored by mean box IoU.

    Elements are matched within their type label to maximize the summed IoU;
    the sum is divided by max(|a|, |b|). 1.0 when both layouts are empty,
    0.0 when exactly one is.
    """
    if not a.elements and not b.elements:
        return 1.0
    if not a.elements or not b.elements:
        return 0.0
    labels_a = a.labels()
    labels_b = b.labels()
    pairs = matching_by_label(
        labels_a,
        labels_b,
        lambda i, j: box_iou(a.elements[i].box, b.elements[j].box),
    )
    total = sum(box_iou(a.elements[i].box, b.elements[j].box) for i, j in pairs)
    return total / max(len(a.elements), len(b.elements))


def max_iou(layout: Layout, references: Sequence[Layout]) -> float:
    """Highest layout_pair_iou against any reference layout."""
    if not references:
        raise InvalidInputError("max_iou needs at least one reference layout")
    return max(layout_pair_iou(layout, ref) for ref in references)


def _center_distance(a: BoundingBox, b: BoundingBox, cw: int, ch: int) -> float:
    dx = (a.center_x - b.center_x) / cw
    dy = (a.center_y - b.center_y) / ch
    return math.hypot(dx, dy)


def _size_distance(a: BoundingBox, b: BoundingBox, cw: int, ch: int) -> float:
    dw = (a.width - b.width) / cw
    dh = (a.height - b.height) / ch
    return math.hypot(dw, dh)


def docsim(a: Layout, b: Layout) -> float:
    """Size-weighted similarity of two layouts in [0, 1]; 1.0 iff identical shape.

    Same-type elements are matched to maximize the summed pair weight
    sqrt(min(area_1, area_2)) * 2^(-dC - 2 dS), where dC is the normalized
    center distance and dS the normalized size distance. The matched sum is
    divided by max(|a|, |b|) and then normalized by the geometric mean of
    both self-scores, which makes the result symmetric and pins docsim(y, y)
    at exactly 1.
    """
    if not a.elements and not b.elements:
        return 1.0
    if not a.elements or not b.elements:
        return 0.0
    raw_ab = _docsim_raw(a, b)
    if raw_ab == 0.0:
        return 0.0
    norm = math.sqrt(_docsim_raw(a, a) * _docsim_raw(b, b))
    if norm == 0.0:
        return 0.0
    return raw_ab / norm


def _docsim_raw(a: Layout, b: Layout) -> float:
    cw, ch = a.canvas.width, a.canvas.height

    def weight(i: int, j: int) -> float:
        box_a = a.elements[i].box
        box_b = b.elements[j].box
        min_area = min(box_a.area / (cw * ch), box_b.area / (cw * ch))
        dc = _center_distance(box_a, box_b, cw, ch)
        ds = _size_distance(box_a, box_b, cw, ch)
        return math.sqrt(min_area) * 2.0 ** (-dc - 2.0 * ds)

    pairs = matching_by_label(a.labels(), b.labels(), weight)
    total = sum(weight(i, j) for i, j in pairs)
    return total / max(len(a.elements), len(b.elements))


def _type_count_violations(required: Sequence[str], produced: Sequence[str]) -> tuple[int, int]:
    """(violations, total) for type-multiset agreement.

    One atomic constraint per required type instance; a missing instance is a
    violation; every element beyond the requirement is an extra, counting one
    violation and one denominator slot so the rate stays within [0, 1]. An
    empty requirement constrains nothing and scores (0, 0).
    """
    if not required:
        return 0, 0
    want = Counter(required)
    got = Counter(produced)
    missing = sum((want - got).values())
    extra = sum((got - want).values())
    total = sum(want.values()) + extra
    return missing + extra, total


def _relation_box(end: tuple[str, int] | str, layout: Layout) -> Optional[BoundingBox]:
    """Resolve one relation endpoint to a produced element's box, if possible.

    Endpoint indices address positions in the layout; the element found there
    must also carry the expected label, otherwise the relation cannot hold.
    """
    if end == CANVAS:
        return None
    label, index = end
    if index >= len(layout.elements):
        return None
    element = layout.elements[index]
    if element.type_label != label:
        return None
    return element.box


def _relation_holds(rel: Relation, layout: Layout, tau: float) -> bool:
    subject = _relation_box(rel.subject, layout)
    if subject is None:
        return False
    canvas = layout.canvas
    if rel.object == CANVAS:
        if rel.predicate is RelationPredicate.TOP:
            return subject.center_y < canvas.height / 3
        if rel.predicate is RelationPredicate.BOTTOM:
            return subject.center_y > 2 * canvas.height / 3
        if rel.predicate is RelationPredicate.LEFT:
            return subject.center_x < canvas.width / 3
        if rel.predicate is RelationPredicate.RIGHT:
            return subject.center_x > 2 * canvas.width / 3
        return False
    obj = _relation_box(rel.object, layout)
    if obj is None:
        return False
    if rel.predicate is RelationPredicate.TOP:
        return subject.bottom <= obj.top
    if rel.predicate is RelationPredicate.BOTTOM:
        return subject.top >= obj.bottom
    if rel.predicate is RelationPredicate.LEFT:
        return subject.right <= obj.left
    if rel.predicate is RelationPredicate.RIGHT:
        return subject.left >= obj.right
    if rel.predicate is RelationPredicate.LARGER:
        return subject.area >= obj.area * (1 + tau)
    if rel.predicate is RelationPredicate.SMALLER:
        return obj.area >= subject.area * (1 + tau)
    return abs(subject.area - obj.area) <= tau * max(subject.area, obj.area)


def _size_pairing_violations(
    constraint: TypeSizeConstraint, layout: Layout
) -> tuple[int, int]:
    """Greedy same-type best-match pairing; exact (w, h) equality required."""
    available: dict[str, list[int]] = {}
    for idx, e in enumerate(layout.elements):
        available.setdefault(e.type_label, []).append(idx)
    violations = 0
    paired = 0
    for label, want_w, want_h in constraint.items:
        candidates = available.get(label)
        if not candidates:
            violations += 1  # nothing of this type left to pair with
            continue
        best = min(
            candidates,
            key=lambda idx: (
                math.hypot(
                    layout.elements[idx].box.width - want_w,
                    layout.elements[idx].box.height - want_h,
                ),
                idx,
            ),
        )
        candidates.remove(best)
        paired += 1
        box = layout.elements[best].box
        if (box.width, box.height) != (want_w, want_h):
            violations += 1
    extras = len(layout.elements) - paired
    violations += extras
    total = len(constraint.items) + extras
    return violations, total


def violation_rate(
    task: TaskKind,
    constraint: ConstraintSpec,
    layout: Layout,
    reference: Optional[Layout] = None,
    size_tolerance: float = SIZE_RELATION_TOLERANCE,
) -> Optional[float]:
    """Fraction of input constraints the layout violates, in [0, 1].

    Returns None for completion and refinement, which define no violation
    semantics. Text-to-layout checks type counts against the sample's
    reference layout and therefore requires one. size_tolerance is the
    slack factor for larger/smaller/equal relations.
    """
    check_task_constraint(task, constraint)
    if task in (TaskKind.COMPLETION, TaskKind.REFINEMENT):
        return None
    if isinstance(constraint, TypeConstraint):
        violations, total = _type_count_violations(constraint.types, layout.labels())
    elif isinstance(constraint, TypeSizeConstraint):
        violations, total = _size_pairing_violations(constraint, layout)
    elif isinstance(constraint, RelationConstraint):
        violations, total = _type_count_violations(constraint.types, layout.labels())
        for rel in constraint.relations:
            total += 1
            if not _relation_holds(rel, layout, size_tolerance):
                violations += 1
    elif isinstance(constraint, ContentConstraint):
        violations, total = _type_count_violations(constraint.types, layout.labels())
    else:
        assert isinstance(constraint, TextConstraint)
        if reference is None:
            raise InvalidInputError(
                "text-to-layout violation rate needs the sample's reference layout"
            )
        violations, total = _type_count_violations(reference.labels(), layout.labels())
    if total == 0:
        return 0.0
    return violations / total


def text_layout_violations(reference: Layout, layout: Layout) -> tuple[float, float]:
    """(type rate, position-and-size rate) against a reference layout.

    The type part is the usual type-count rate. For the second part,
    same-label elements are paired greedily by center distance; a pair
    violates when its normalized center or size distance exceeds
    POS_SIZE_TOLERANCE, and unpaired reference elements violate outright.
    """
    type_violations, type_total = _type_count_violations(
        reference.labels(), layout.labels()
    )
    type_rate = type_violations / type_total if type_total else 0.0

    if not reference.elements:
        return type_rate, 0.0
    cw, ch = reference.canvas.width, reference.canvas.height
    available: dict[str, list[int]] = {}
    for idx, e in enumerate(layout.elements):
        available.setdefault(e.type_label, []).append(idx)
    violations = 0
    for ref_el in reference.elements:
        candidates = available.get(ref_el.type_label)
        if not candidates:
            violations += 1
            continue
        best = min(
            candidates,
            key=lambda idx: (
                _center_distance(ref_el.box, layout.elements[idx].box, cw, ch),
                idx,
            ),
        )
        candidates.remove(best)
        got = layout.elements[best].box
        if (
            _center_distance(ref_el.box, got, cw, ch) > POS_SIZE_TOLERANCE
            or _size_distance(ref_el.box, got, cw, ch) > POS_SIZE_TOLERANCE
        ):
            violations += 1
    return type_rate, violations / len(reference.elements)
