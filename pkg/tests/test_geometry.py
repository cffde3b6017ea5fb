"""Box arithmetic, canvas clamping, discretization, and domain presets."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from layoutgen.errors import InvalidInputError
from layoutgen.geometry import (
    DOMAIN_PRESETS,
    BoundingBox,
    CanvasSpec,
    RawElement,
    RawLayout,
    box_iou,
    clamp_box,
    discretize_layout,
    get_domain,
    intersection_area,
    layout_from_tuples,
    normalize_label,
    round_half_away,
)


class TestBoundingBox:
    def test_derived_edges(self):
        box = BoundingBox(3, 4, 10, 20)
        assert box.right == 13
        assert box.bottom == 24
        assert box.area == 200
        assert box.center_x == 8.0
        assert box.center_y == 14.0

    def test_zero_size_is_allowed(self):
        assert BoundingBox(5, 5, 0, 0).area == 0

    @pytest.mark.parametrize("w,h", [(-1, 5), (5, -1), (-3, -3)])
    def test_negative_size_rejected(self, w, h):
        with pytest.raises(InvalidInputError):
            BoundingBox(0, 0, w, h)


class TestCanvasSpec:
    @pytest.mark.parametrize("w,h", [(0, 10), (10, 0), (-5, 10)])
    def test_non_positive_rejected(self, w, h):
        with pytest.raises(InvalidInputError):
            CanvasSpec(w, h)

    def test_contains(self):
        canvas = CanvasSpec(90, 160)
        assert canvas.contains(BoundingBox(0, 0, 90, 160))
        assert canvas.contains(BoundingBox(10, 10, 0, 0))
        assert not canvas.contains(BoundingBox(85, 0, 10, 10))
        assert not canvas.contains(BoundingBox(-1, 0, 5, 5))


def test_normalize_label_lowercases_and_collapses_whitespace():
    assert normalize_label("Text  Button") == "text button"
    assert normalize_label(" ICON ") == "icon"
    assert normalize_label("text\tbutton") == "text button"


class TestRounding:
    @pytest.mark.parametrize(
        "value,expected",
        [
            (0.0, 0),
            (0.4, 0),
            (0.5, 1),
            (1.5, 2),
            (2.5, 3),
            (-0.5, -1),
            (-1.5, -2),
            (-0.4, 0),
            (10.49, 10),
        ],
    )
    def test_half_away_from_zero(self, value, expected):
        assert round_half_away(value) == expected


class TestClampBox:
    def test_inside_box_unchanged(self):
        canvas = CanvasSpec(90, 160)
        assert clamp_box(10, 20, 30, 40, canvas) == BoundingBox(10, 20, 30, 40)

    def test_overflow_shrinks_size(self):
        canvas = CanvasSpec(90, 160)
        assert clamp_box(85, 0, 20, 10, canvas) == BoundingBox(85, 0, 5, 10)

    def test_negative_position_moved_to_origin(self):
        canvas = CanvasSpec(90, 160)
        assert clamp_box(-5, -7, 10, 10, canvas) == BoundingBox(0, 0, 10, 10)

    def test_fully_outside_collapses_to_edge(self):
        canvas = CanvasSpec(90, 160)
        box = clamp_box(200, 300, 10, 10, canvas)
        assert box == BoundingBox(90, 160, 0, 0)

    @given(
        left=st.integers(-200, 200),
        top=st.integers(-300, 300),
        width=st.integers(0, 250),
        height=st.integers(0, 350),
    )
    def test_result_always_inside_canvas(self, left, top, width, height):
        canvas = CanvasSpec(90, 160)
        assert canvas.contains(clamp_box(left, top, width, height, canvas))


class TestDiscretize:
    def test_identity_when_source_matches_target(self):
        canvas = CanvasSpec(90, 160)
        raw = RawLayout(90, 160, (RawElement("text", 10, 20, 30, 40),))
        layout = discretize_layout(raw, canvas)
        assert layout.elements[0].box == BoundingBox(10, 20, 30, 40)

    def test_scaling_from_screen_resolution(self):
        # 1440x2560 maps onto 90x160 with a uniform 1/16 factor.
        canvas = CanvasSpec(90, 160)
        raw = RawLayout(1440, 2560, (RawElement("text", 160, 320, 480, 640),))
        layout = discretize_layout(raw, canvas)
        assert layout.elements[0].box == BoundingBox(10, 20, 30, 40)

    def test_rounding_is_half_away(self):
        canvas = CanvasSpec(90, 160)
        raw = RawLayout(180, 320, (RawElement("text", 1, 1, 3, 3),))
        layout = discretize_layout(raw, canvas)
        # 0.5 rounds to 1, 1.5 rounds to 2
        assert layout.elements[0].box == BoundingBox(1, 1, 2, 2)

    def test_labels_are_normalized(self):
        canvas = CanvasSpec(90, 160)
        raw = RawLayout(90, 160, (RawElement("Text  Button", 0, 0, 5, 5),))
        assert discretize_layout(raw, canvas).elements[0].type_label == "text button"

    def test_non_positive_source_rejected(self):
        with pytest.raises(InvalidInputError):
            discretize_layout(RawLayout(0, 100, ()), CanvasSpec(90, 160))

    def test_out_of_source_boxes_clamped(self):
        canvas = CanvasSpec(90, 160)
        raw = RawLayout(90, 160, (RawElement("text", 80, 0, 30, 10),))
        assert discretize_layout(raw, canvas).elements[0].box == BoundingBox(80, 0, 10, 10)


class TestIoU:
    def test_identical_boxes(self):
        box = BoundingBox(2, 3, 10, 10)
        assert box_iou(box, box) == 1.0

    def test_disjoint_boxes(self):
        assert box_iou(BoundingBox(0, 0, 5, 5), BoundingBox(10, 10, 5, 5)) == 0.0

    def test_touching_boxes_do_not_intersect(self):
        assert intersection_area(BoundingBox(0, 0, 5, 5), BoundingBox(5, 0, 5, 5)) == 0

    def test_half_overlap(self):
        # inter 50, union 150
        a = BoundingBox(0, 0, 10, 10)
        b = BoundingBox(5, 0, 10, 10)
        assert box_iou(a, b) == pytest.approx(1 / 3)

    def test_both_zero_area(self):
        assert box_iou(BoundingBox(3, 3, 0, 0), BoundingBox(3, 3, 0, 0)) == 0.0

    @given(
        ax=st.integers(0, 80),
        ay=st.integers(0, 80),
        aw=st.integers(0, 40),
        ah=st.integers(0, 40),
        bx=st.integers(0, 80),
        by=st.integers(0, 80),
        bw=st.integers(0, 40),
        bh=st.integers(0, 40),
    )
    def test_symmetric_and_bounded(self, ax, ay, aw, ah, bx, by, bw, bh):
        a = BoundingBox(ax, ay, aw, ah)
        b = BoundingBox(bx, by, bw, bh)
        assert box_iou(a, b) == box_iou(b, a)
        assert 0.0 <= box_iou(a, b) <= 1.0


class TestDomains:
    def test_preset_canvas_sizes(self):
        assert get_domain("rico").canvas == CanvasSpec(90, 160)
        assert get_domain("publaynet").canvas == CanvasSpec(120, 160)
        assert get_domain("posterlayout").canvas == CanvasSpec(102, 150)
        assert get_domain("webui").canvas == CanvasSpec(120, 120)

    def test_preset_names(self):
        assert get_domain("rico").name == "android layout"
        assert get_domain("publaynet").name == "document layout"
        assert get_domain("posterlayout").name == "poster layout"
        assert get_domain("webui").name == "web layout"

    def test_vocabulary_sizes(self):
        assert get_domain("rico").type_count == 25
        assert get_domain("publaynet").type_count == 5
        assert get_domain("posterlayout").type_count == 3
        assert get_domain("webui").type_count == 10

    def test_unknown_preset(self):
        with pytest.raises(InvalidInputError):
            get_domain("imaginary")

    def test_knows_label(self):
        rico = get_domain("rico")
        assert rico.knows_label("text button")
        assert not rico.knows_label("blink tag")

    def test_every_preset_label_is_normalized(self):
        for domain in DOMAIN_PRESETS.values():
            for label in domain.type_vocabulary:
                assert label == normalize_label(label)


def test_layout_from_tuples():
    layout = layout_from_tuples(CanvasSpec(90, 160), [("text", 1, 2, 3, 4)])
    assert layout.labels() == ("text",)
    assert layout.elements[0].box == BoundingBox(1, 2, 3, 4)
    assert len(layout) == 1
