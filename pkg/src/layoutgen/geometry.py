"""Discrete canvas geometry: boxes, elements, layouts, and domain presets.

All coordinates are integer pixels on a fixed-size canvas. Every other module
builds on the value types and the area/IoU primitives defined here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import InvalidInputError


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box given by its top-left corner and size, in px."""

    left: int
    top: int
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 0 or self.height < 0:
            raise InvalidInputError(
                f"box size must be non-negative, got {self.width}x{self.height}"
            )

    @property
    def right(self) -> int:
        return self.left + self.width

    @property
    def bottom(self) -> int:
        return self.top + self.height

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def center_x(self) -> float:
        return self.left + self.width / 2

    @property
    def center_y(self) -> float:
        return self.top + self.height / 2


@dataclass(frozen=True)
class CanvasSpec:
    """Canvas dimensions in px; strictly positive."""

    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise InvalidInputError(
                f"canvas must have positive dimensions, got {self.width}x{self.height}"
            )

    def contains(self, box: BoundingBox) -> bool:
        return (
            box.left >= 0
            and box.top >= 0
            and box.right <= self.width
            and box.bottom <= self.height
        )


@dataclass(frozen=True)
class Element:
    """A typed box. The label must come from the active domain vocabulary."""

    type_label: str
    box: BoundingBox


@dataclass(frozen=True)
class Layout:
    """An ordered sequence of elements on a canvas.

    Order is significant and preserved by serialization: completion and
    refinement tasks read meaning into element positions in the sequence.
    """

    canvas: CanvasSpec
    elements: tuple[Element, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "elements", tuple(self.elements))

    def labels(self) -> tuple[str, ...]:
        return tuple(e.type_label for e in self.elements)

    def __len__(self) -> int:
        return len(self.elements)


@dataclass(frozen=True)
class DomainConfig:
    """A layout domain: its name, canvas size, and element-type vocabulary."""

    name: str
    canvas: CanvasSpec
    type_vocabulary: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "type_vocabulary", tuple(self.type_vocabulary))

    @property
    def type_count(self) -> int:
        return len(self.type_vocabulary)

    def knows_label(self, label: str) -> bool:
        return label in self.type_vocabulary


def normalize_label(label: str) -> str:
    """Lowercase and collapse runs of whitespace ("Text  Button" -> "text button")."""
    return " ".join(label.lower().split())


# Named domain presets. Canvas sizes are bit-exact contract values; the
# vocabularies are the datasets' standard annotation label sets.
DOMAIN_PRESETS: dict[str, DomainConfig] = {
    "rico": DomainConfig(
        name="android layout",
        canvas=CanvasSpec(90, 160),
        type_vocabulary=(
            "text",
            "image",
            "icon",
            "text button",
            "list item",
            "input",
            "background image",
            "card",
            "web view",
            "radio button",
            "drawer",
            "checkbox",
            "advertisement",
            "modal",
            "pager indicator",
            "slider",
            "on/off switch",
            "button bar",
            "toolbar",
            "number stepper",
            "multi-tab",
            "date picker",
            "map view",
            "video",
            "bottom navigation",
        ),
    ),
    "publaynet": DomainConfig(
        name="document layout",
        canvas=CanvasSpec(120, 160),
        type_vocabulary=("text", "title", "list", "table", "figure"),
    ),
    "posterlayout": DomainConfig(
        name="poster layout",
        canvas=CanvasSpec(102, 150),
        type_vocabulary=("text", "logo", "underlay"),
    ),
    "webui": DomainConfig(
        name="web layout",
        canvas=CanvasSpec(120, 120),
        type_vocabulary=(
            "text",
            "link",
            "button",
            "title",
            "description",
            "image",
            "background",
            "logo",
            "icon",
            "input",
        ),
    ),
}


def get_domain(name: str) -> DomainConfig:
    """Look up a preset by key ("rico", "publaynet", "posterlayout", "webui")."""
    try:
        return DOMAIN_PRESETS[name]
    except KeyError:
        raise InvalidInputError(
            f"unknown domain preset {name!r}; expected one of {sorted(DOMAIN_PRESETS)}"
        ) from None


@dataclass(frozen=True)
class RawElement:
    """An element with real-valued coordinates in source units."""

    type_label: str
    left: float
    top: float
    width: float
    height: float


@dataclass(frozen=True)
class RawLayout:
    """A layout as it arrives from a dataset, before discretization."""

    source_width: float
    source_height: float
    elements: tuple[RawElement, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "elements", tuple(self.elements))


def round_half_away(x: float) -> int:
    """Round to the nearest integer, ties away from zero."""
    if x >= 0:
        return math.floor(x + 0.5)
    return math.ceil(x - 0.5)


def clamp(value: int, low: int, high: int) -> int:
    return max(low, min(high, value))


def clamp_box(left: int, top: int, width: int, height: int, canvas: CanvasSpec) -> BoundingBox:
    """Force a box inside the canvas, shrinking size before shifting position."""
    left = clamp(left, 0, canvas.width)
    top = clamp(top, 0, canvas.height)
    width = clamp(width, 0, canvas.width - left)
    height = clamp(height, 0, canvas.height - top)
    return BoundingBox(left, top, width, height)


def discretize_layout(raw: RawLayout, target: CanvasSpec) -> Layout:
    """Scale a real-valued layout onto the target canvas grid.

    Each coordinate is scaled by the per-axis ratio target/source, rounded
    half away from zero, then clamped to the canvas. Idempotent when the
    source equals the target and all values are already integral.

    Raises:
        InvalidInputError: if the source canvas has a non-positive dimension.
    """
    if raw.source_width <= 0 or raw.source_height <= 0:
        raise InvalidInputError(
            "source canvas must have positive dimensions, got "
            f"{raw.source_width}x{raw.source_height}"
        )
    sx = target.width / raw.source_width
    sy = target.height / raw.source_height
    elements = []
    for e in raw.elements:
        box = clamp_box(
            round_half_away(e.left * sx),
            round_half_away(e.top * sy),
            round_half_away(e.width * sx),
            round_half_away(e.height * sy),
            target,
        )
        elements.append(Element(normalize_label(e.type_label), box))
    return Layout(canvas=target, elements=tuple(elements))


def intersection_area(a: BoundingBox, b: BoundingBox) -> int:
    """Area of overlap in px^2; zero when the boxes are disjoint or touching."""
    overlap_x = min(a.right, b.right) - max(a.left, b.left)
    overlap_y = min(a.bottom, b.bottom) - max(a.top, b.top)
    return max(0, overlap_x) * max(0, overlap_y)


def box_iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union in [0, 1]; 0 by convention when both areas are 0."""
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    if union == 0:
        return 0.0
    return inter / union


def layout_from_tuples(
    canvas: CanvasSpec, items: Iterable[Sequence]
) -> Layout:
    """Build a Layout from (label, left, top, width, height) tuples."""
    elements = tuple(
        Element(str(label), BoundingBox(int(l), int(t), int(w), int(h)))
        for label, l, t, w, h in items
    )
    return Layout(canvas=canvas, elements=elements)
