"""Deterministic SVG rendering of layouts as colored, labeled boxes."""

from __future__ import annotations

from typing import Mapping, Optional

from .geometry import DomainConfig, Layout

#: Fill colors cycled over a domain's vocabulary, in vocabulary order.
_PALETTE = (
    "#e6194b",
    "#3cb44b",
    "#ffe119",
    "#4363d8",
    "#f58231",
    "#911eb4",
    "#46f0f0",
    "#f032e6",
    "#bcf60c",
    "#fabebe",
    "#008080",
    "#e6beff",
    "#9a6324",
    "#fffac8",
    "#800000",
    "#aaffc3",
    "#808000",
    "#ffd8b1",
    "#000075",
    "#808080",
    "#b5651d",
    "#2f4f4f",
    "#ff1493",
    "#00ced1",
    "#7fff00",
)

#: Poster layouts follow the conventional coloring: logo red, text green,
#: underlay yellow.
_POSTER_COLORS = {
    "logo": "#e6194b",
    "text": "#3cb44b",
    "underlay": "#ffe119",
}


def domain_colors(domain: DomainConfig) -> dict[str, str]:
    """Stable label -> fill color assignment for a domain."""
    colors = {
        label: _PALETTE[i % len(_PALETTE)]
        for i, label in enumerate(domain.type_vocabulary)
    }
    if set(_POSTER_COLORS) <= set(domain.type_vocabulary):
        colors.update(_POSTER_COLORS)
    return colors


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def render_svg(
    layout: Layout,
    domain: DomainConfig,
    styles: Optional[Mapping[str, str]] = None,
) -> str:
    """Render a layout to a standalone SVG document string.

    One semi-transparent rect plus a small label per element, drawn in
    element order on a white canvas frame. styles maps type labels to fill
    colors and overrides the domain defaults. Output is byte-deterministic.
    """
    colors = domain_colors(domain)
    if styles:
        colors.update(styles)
    width = layout.canvas.width
    height = layout.canvas.height
    lines = [
        '<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="0 0 {width} {height}" width="{width * 4}" height="{height * 4}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" '
        'fill="white" stroke="#333333" stroke-width="0.5"/>',
    ]
    for e in layout.elements:
        fill = colors.get(e.type_label, "#cccccc")
        b = e.box
        lines.append(
            f'<rect x="{b.left}" y="{b.top}" width="{b.width}" height="{b.height}" '
            f'fill="{fill}" fill-opacity="0.45" stroke="{fill}" stroke-width="0.6"/>'
        )
        lines.append(
            f'<text x="{b.left + 1}" y="{b.top + 3}" font-size="3" '
            f'font-family="sans-serif" fill="#111111">{_escape(e.type_label)}</text>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
