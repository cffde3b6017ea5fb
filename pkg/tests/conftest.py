"""Shared fixtures and layout builders for the test suite."""

from __future__ import annotations

import random

import pytest

from layoutgen.geometry import (
    BoundingBox,
    CanvasSpec,
    DomainConfig,
    Element,
    Layout,
    get_domain,
)


@pytest.fixture
def rico() -> DomainConfig:
    return get_domain("rico")


@pytest.fixture
def publaynet() -> DomainConfig:
    return get_domain("publaynet")


@pytest.fixture
def posterlayout() -> DomainConfig:
    return get_domain("posterlayout")


@pytest.fixture
def webui() -> DomainConfig:
    return get_domain("webui")


def make_layout(canvas: CanvasSpec, items) -> Layout:
    """Layout from (label, left, top, width, height) tuples."""
    return Layout(
        canvas=canvas,
        elements=tuple(
            Element(label, BoundingBox(l, t, w, h)) for label, l, t, w, h in items
        ),
    )


def random_layout(
    rng: random.Random,
    domain: DomainConfig,
    min_elements: int = 1,
    max_elements: int = 8,
    labels=None,
) -> Layout:
    """A random in-canvas layout drawn from the domain vocabulary."""
    vocabulary = labels if labels is not None else domain.type_vocabulary
    n = rng.randint(min_elements, max_elements)
    elements = []
    for _ in range(n):
        w = rng.randint(0, domain.canvas.width)
        h = rng.randint(0, domain.canvas.height)
        left = rng.randint(0, domain.canvas.width - w)
        top = rng.randint(0, domain.canvas.height - h)
        elements.append(Element(rng.choice(vocabulary), BoundingBox(left, top, w, h)))
    return Layout(canvas=domain.canvas, elements=tuple(elements))
