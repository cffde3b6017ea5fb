"""Text grammars: constraints to prompt strings, layouts to and from HTML.

Serialization is exact and deterministic because the HTML block is the wire
format the completion provider sees and echoes back. Parsing goes the other
way over untrusted model output, so it is a tolerant scan that skips what it
cannot use and reports warnings instead of failing.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Union

from .errors import EmptyCandidateError, InvalidInputError
from .geometry import (
    BoundingBox,
    CanvasSpec,
    DomainConfig,
    Element,
    Layout,
    clamp_box,
    normalize_label,
    round_half_away,
)


class TaskKind(enum.Enum):
    """The seven generation tasks; every pipeline run is tagged with one."""

    GEN_T = "gen_t"
    GEN_TS = "gen_ts"
    GEN_R = "gen_r"
    COMPLETION = "completion"
    REFINEMENT = "refinement"
    CONTENT_AWARE = "content_aware"
    TEXT_TO_LAYOUT = "text_to_layout"


TASK_DESCRIPTIONS: dict[TaskKind, str] = {
    TaskKind.GEN_T: "generation conditioned on given element types",
    TaskKind.GEN_TS: "generation conditioned on given element types and sizes",
    TaskKind.GEN_R: "generation conditioned on given element relationships",
    TaskKind.COMPLETION: "layout completion",
    TaskKind.REFINEMENT: "layout refinement",
    TaskKind.CONTENT_AWARE: "content-aware layout generation",
    TaskKind.TEXT_TO_LAYOUT: "text-to-layout",
}


class RelationPredicate(enum.Enum):
    TOP = "top"
    BOTTOM = "bottom"
    LEFT = "left"
    RIGHT = "right"
    LARGER = "larger"
    SMALLER = "smaller"
    EQUAL = "equal"


SIZE_PREDICATES = frozenset(
    {RelationPredicate.LARGER, RelationPredicate.SMALLER, RelationPredicate.EQUAL}
)

#: Sentinel object token for relations whose object is the canvas itself.
CANVAS = "canvas"


@dataclass(frozen=True)
class Relation:
    """One pairwise constraint: subject (type, index) vs object or the canvas.

    Indices are global positions in the accompanying type list.
    """

    subject: tuple[str, int]
    predicate: RelationPredicate
    object: Union[tuple[str, int], str]

    def __post_init__(self) -> None:
        if self.object == CANVAS and self.predicate in SIZE_PREDICATES:
            raise InvalidInputError(
                f"size predicate {self.predicate.value!r} cannot target the canvas"
            )


@dataclass(frozen=True)
class TypeConstraint:
    types: tuple[str, ...]


@dataclass(frozen=True)
class TypeSizeConstraint:
    items: tuple[tuple[str, int, int], ...]

    @property
    def types(self) -> tuple[str, ...]:
        return tuple(label for label, _, _ in self.items)


@dataclass(frozen=True)
class RelationConstraint:
    types: tuple[str, ...]
    relations: tuple[Relation, ...]

    def __post_init__(self) -> None:
        for rel in self.relations:
            for end in (rel.subject,) + (
                () if rel.object == CANVAS else (rel.object,)
            ):
                label, index = end
                if not 0 <= index < len(self.types):
                    raise InvalidInputError(
                        f"relation index {index} out of range for {len(self.types)} types"
                    )
                if self.types[index] != label:
                    raise InvalidInputError(
                        f"relation names {label!r} at index {index}, "
                        f"but the type list has {self.types[index]!r} there"
                    )


@dataclass(frozen=True)
class PartialLayout:
    elements: tuple[Element, ...]


@dataclass(frozen=True)
class NoisyLayout:
    elements: tuple[Element, ...]


@dataclass(frozen=True)
class ContentConstraint:
    box: BoundingBox
    types: tuple[str, ...]


@dataclass(frozen=True)
class TextConstraint:
    text: str


ConstraintSpec = Union[
    TypeConstraint,
    TypeSizeConstraint,
    RelationConstraint,
    PartialLayout,
    NoisyLayout,
    ContentConstraint,
    TextConstraint,
]

_TASK_CONSTRAINTS: dict[TaskKind, type] = {
    TaskKind.GEN_T: TypeConstraint,
    TaskKind.GEN_TS: TypeSizeConstraint,
    TaskKind.GEN_R: RelationConstraint,
    TaskKind.COMPLETION: PartialLayout,
    TaskKind.REFINEMENT: NoisyLayout,
    TaskKind.CONTENT_AWARE: ContentConstraint,
    TaskKind.TEXT_TO_LAYOUT: TextConstraint,
}


def check_task_constraint(task: TaskKind, constraint: ConstraintSpec) -> None:
    expected = _TASK_CONSTRAINTS[task]
    if not isinstance(constraint, expected):
        raise InvalidInputError(
            f"task {task.value} expects {expected.__name__}, "
            f"got {type(constraint).__name__}"
        )


def _element_items(elements: tuple[Element, ...]) -> str:
    return " | ".join(
        f"{e.type_label} {e.box.left} {e.box.top} {e.box.width} {e.box.height}"
        for e in elements
    )


def serialize_constraint(task: TaskKind, constraint: ConstraintSpec) -> str:
    """Render a constraint in the exact prompt grammar for its task.

    Gen-R and content-aware constraints span two lines; all others one.

    Raises:
        InvalidInputError: if the constraint kind does not match the task.
    """
    check_task_constraint(task, constraint)
    if isinstance(constraint, TypeConstraint):
        return "Element Type Constraint: " + " | ".join(constraint.types)
    if isinstance(constraint, TypeSizeConstraint):
        items = " | ".join(f"{c} {w} {h}" for c, w, h in constraint.items)
        return "Element Type and Size Constraint: " + items
    if isinstance(constraint, RelationConstraint):
        lines = ["Element Type Constraint: " + " | ".join(constraint.types)]
        if constraint.relations:
            parts = []
            for rel in constraint.relations:
                target = (
                    CANVAS
                    if rel.object == CANVAS
                    else f"{rel.object[0]} {rel.object[1]}"
                )
                parts.append(
                    f"{rel.subject[0]} {rel.subject[1]} {rel.predicate.value} {target}"
                )
            lines.append("Element Relationship Constraint: " + " | ".join(parts))
        return "\n".join(lines)
    if isinstance(constraint, PartialLayout):
        return "Partial Layout: " + _element_items(constraint.elements)
    if isinstance(constraint, NoisyLayout):
        return "Noise Layout: " + _element_items(constraint.elements)
    if isinstance(constraint, ContentConstraint):
        b = constraint.box
        lines = [
            f"Content Constraint: left {b.left}px, top {b.top}px, "
            f"width {b.width}px, height {b.height}px"
        ]
        if constraint.types:
            lines.append("Element Type Constraint: " + " | ".join(constraint.types))
        return "\n".join(lines)
    return "Text: " + constraint.text


def serialize_preamble(task: TaskKind, domain: DomainConfig) -> str:
    """The fixed four-line prompt header for a task/domain pair."""
    return (
        "Please generate a layout based on the given information.\n"
        f"Task Description: {TASK_DESCRIPTIONS[task]}\n"
        f"Layout Domain: {domain.name}\n"
        f"Canvas Size: canvas width is {domain.canvas.width}px, "
        f"canvas height is {domain.canvas.height}px"
    )


def serialize_layout_html(layout: Layout) -> str:
    """Render a layout as the HTML block the model is asked to produce.

    One div line per element in order, integer attributes, fixed attribute
    order. Output is byte-deterministic.
    """
    lines = ["<html>", "<body>"]
    for e in layout.elements:
        b = e.box
        lines.append(
            f'<div class="{e.type_label}" style="left:{b.left}px; top:{b.top}px; '
            f'width:{b.width}px; height:{b.height}px"></div>'
        )
    lines.append("</body>")
    lines.append("</html>")
    return "\n".join(lines)


@dataclass(frozen=True)
class ParseWarning:
    """A non-fatal issue hit while extracting a layout from model output."""

    kind: str  # "malformed" | "unknown-type" | "clamped"
    detail: str


_DIV_RE = re.compile(r"<div\b([^>]*)>", re.IGNORECASE)
_CLASS_RE = re.compile(r"""class\s*=\s*["']([^"']*)["']""", re.IGNORECASE)
_STYLE_RE = re.compile(r"""style\s*=\s*["']([^"']*)["']""", re.IGNORECASE)
_COORD_RES = {
    name: re.compile(rf"{name}\s*:\s*(-?\d+(?:\.\d+)?)\s*px", re.IGNORECASE)
    for name in ("left", "top", "width", "height")
}


def parse_layout_html(text: str, domain: DomainConfig) -> tuple[Layout, list[ParseWarning]]:
    """Extract a layout from untrusted model output.

    Scans for div tags; each needs a known class and all four style values
    (any attribute order, optional fractional px, arbitrary whitespace).
    Unusable divs are skipped with a warning; out-of-canvas coordinates are
    clamped with a warning. Surviving elements keep their textual order.

    Raises:
        EmptyCandidateError: if no element could be extracted at all.
    """
    elements: list[Element] = []
    warnings: list[ParseWarning] = []
    for match in _DIV_RE.finditer(text):
        attrs = match.group(1)
        class_match = _CLASS_RE.search(attrs)
        style_match = _STYLE_RE.search(attrs)
        if class_match is None or style_match is None:
            warnings.append(
                ParseWarning("malformed", f"div missing class or style: {attrs.strip()!r}")
            )
            continue
        label = normalize_label(class_match.group(1))
        if not domain.knows_label(label):
            warnings.append(ParseWarning("unknown-type", f"skipping label {label!r}"))
            continue
        style = style_match.group(1)
        coords = {}
        for name, pattern in _COORD_RES.items():
            coord_match = pattern.search(style)
            if coord_match is None:
                break
            coords[name] = round_half_away(float(coord_match.group(1)))
        if len(coords) != 4:
            warnings.append(
                ParseWarning("malformed", f"style missing coordinates: {style!r}")
            )
            continue
        raw = (coords["left"], coords["top"], max(0, coords["width"]), max(0, coords["height"]))
        box = clamp_box(*raw, domain.canvas)
        if (box.left, box.top, box.width, box.height) != (
            coords["left"],
            coords["top"],
            coords["width"],
            coords["height"],
        ):
            warnings.append(
                ParseWarning(
                    "clamped",
                    f"{label} {coords['left']} {coords['top']} "
                    f"{coords['width']} {coords['height']} clamped to canvas",
                )
            )
        elements.append(Element(label, box))
    if not elements:
        raise EmptyCandidateError("no layout elements found in model output", tuple(warnings))
    return Layout(canvas=domain.canvas, elements=tuple(elements)), warnings


def constraint_types(constraint: ConstraintSpec) -> tuple[str, ...]:
    """The element-type list a constraint implies; empty for free text."""
    if isinstance(constraint, (TypeConstraint, RelationConstraint, ContentConstraint)):
        return constraint.types
    if isinstance(constraint, TypeSizeConstraint):
        return constraint.types
    if isinstance(constraint, (PartialLayout, NoisyLayout)):
        return tuple(e.type_label for e in constraint.elements)
    return ()
