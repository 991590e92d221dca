import random

import pytest

from svg2cad.drawing import DRAWING_LEN, SvgKind, ViewLabel
from svg2cad.svg_ingest import (
    Contour,
    Segment,
    SvgParseError,
    UnsupportedCommandError,
    build_contours,
    drawing_from_svg,
    normalize_viewbox,
    parse_path_data,
    reorder_contours,
)


def seg(x0, y0, x1, y1):
    return Segment("line", (x0, y0), (x1, y1))


def square_segments(x0, y0, size):
    x1, y1 = x0 + size, y0 + size
    return [seg(x0, y0, x1, y0), seg(x1, y0, x1, y1), seg(x1, y1, x0, y1), seg(x0, y1, x0, y0)]


class TestParsePathData:
    def test_closed_triangle(self):
        segments = parse_path_data("M 0 0 L 10 0 L 10 10 Z")
        assert len(segments) == 3
        assert segments[0] == seg(0, 0, 10, 0)
        assert segments[2] == seg(10, 10, 0, 0)

    def test_relative_moveto_lineto(self):
        segments = parse_path_data("m 5 5 l 5 0")
        assert segments == [seg(5, 5, 10, 5)]

    def test_cubic(self):
        segments = parse_path_data("M0,0 C 0,10 10,10 10,0")
        assert len(segments) == 1
        s = segments[0]
        assert s.kind == "cubic"
        assert s.c1 == (0, 10) and s.c2 == (10, 10)
        assert s.start == (0, 0) and s.end == (10, 0)

    def test_horizontal_vertical(self):
        segments = parse_path_data("M 1 2 H 5 V 7 h -2 v 1")
        assert segments == [seg(1, 2, 5, 2), seg(5, 2, 5, 7), seg(5, 7, 3, 7), seg(3, 7, 3, 8)]

    def test_implicit_lineto_after_moveto(self):
        segments = parse_path_data("M 0 0 10 0 10 10")
        assert segments == [seg(0, 0, 10, 0), seg(10, 0, 10, 10)]
        rel = parse_path_data("m 1 1 2 0 0 2")
        assert rel == [seg(1, 1, 3, 1), seg(3, 1, 3, 3)]

    def test_repeated_command_params(self):
        segments = parse_path_data("M0 0 L 1 0 2 0 3 0")
        assert len(segments) == 3
        assert segments[-1].end == (3, 0)

    def test_multiple_subpaths(self):
        segments = parse_path_data("M0 0 L1 0 Z M5 5 L6 5 Z")
        # zero-area subpaths close back with explicit lines
        assert len(segments) == 4
        assert segments[1] == seg(1, 0, 0, 0)
        assert segments[2] == seg(5, 5, 6, 5)

    def test_scientific_notation(self):
        segments = parse_path_data("M 1e1 -2.5e-1 L 2e1 0")
        assert segments[0].start == (10.0, -0.25)

    @pytest.mark.parametrize("letter", ["A", "Q", "S", "T"])
    def test_unsupported_commands_named(self, letter):
        with pytest.raises(UnsupportedCommandError, match=letter):
            parse_path_data(f"M 0 0 {letter} 1 2")

    def test_malformed_number_reports_offset(self):
        with pytest.raises(SvgParseError, match="byte"):
            parse_path_data("M 0 0 L x 2")

    def test_number_before_command(self):
        with pytest.raises(SvgParseError):
            parse_path_data("10 10 L 0 0")

    def test_empty_is_empty(self):
        assert parse_path_data("") == []


class TestNormalizeViewbox:
    def test_square_upscale(self):
        out = normalize_viewbox([seg(50, 50, 60, 60)], (0, 0, 100, 100))
        assert out[0].start == (100.0, 100.0)

    def test_wide_viewbox_centers_vertically(self):
        out = normalize_viewbox([seg(0, 0, 1, 0)], (0, 0, 200, 100))
        assert out[0].start == (0.0, 50.0)

    def test_identity(self):
        segments = [seg(3, 4, 5, 6)]
        out = normalize_viewbox(segments, (0, 0, 200, 200))
        assert out == segments

    def test_min_corner_translated(self):
        out = normalize_viewbox([seg(10, 20, 11, 21)], (10, 20, 100, 100))
        assert out[0].start == (0.0, 0.0)

    def test_degenerate_viewbox(self):
        with pytest.raises(SvgParseError):
            normalize_viewbox([], (0, 0, 0, 100))


class TestBuildContours:
    def test_square_any_order(self):
        base = square_segments(0, 0, 10)
        for perm in ([0, 1, 2, 3], [3, 1, 0, 2], [2, 0, 3, 1]):
            contours = build_contours([base[i] for i in perm])
            assert len(contours) == 1
            assert contours[0].closed
            assert len(contours[0].segments) == 4

    def test_two_disjoint_squares(self):
        segments = square_segments(0, 0, 10) + square_segments(50, 50, 10)
        contours = build_contours(segments)
        assert len(contours) == 2
        assert all(c.closed for c in contours)

    def test_single_open_line(self):
        contours = build_contours([seg(0, 0, 5, 5)])
        assert len(contours) == 1
        assert not contours[0].closed

    def test_conservation_with_junctions(self):
        # four segments meeting at one vertex: edge count preserved over trails
        spokes = [seg(0, 0, 1, 0), seg(0, 0, -1, 0), seg(0, 0, 0, 1), seg(0, 0, 0, -1)]
        contours = build_contours(spokes)
        assert sum(len(c.segments) for c in contours) == 4

    def test_join_tolerance(self):
        contours = build_contours([seg(0, 0, 1, 0), seg(1 + 5e-4, 0, 1, 1)], tau_join=1e-3)
        assert len(contours) == 1
        assert len(contours[0].segments) == 2


class TestReorderContours:
    def test_nearer_square_first(self):
        far = Contour(tuple(square_segments(50, 60, 10)), closed=True)
        near = Contour(tuple(square_segments(10, 20, 10)), closed=True)
        out = reorder_contours([far, near])
        assert out[0].segments[0].start == (10, 20)

    def test_counterclockwise_square_flipped(self):
        # y-down frame: (0,0)->(10,0)->(10,10)->(0,10) has positive shoelace area
        ccw = Contour((seg(0, 0, 0, 10), seg(0, 10, 10, 10), seg(10, 10, 10, 0), seg(10, 0, 0, 0)),
                      closed=True)
        out = reorder_contours([ccw])[0]
        pts = [s.start for s in out.segments]
        area = sum(x0 * y1 - x1 * y0 for (x0, y0), (x1, y1) in zip(pts, pts[1:] + pts[:1]))
        assert area > 0

    def test_start_vertex_nearest_origin(self):
        contour = Contour(tuple(square_segments(5, 5, 10)), closed=True)
        out = reorder_contours([contour])[0]
        assert out.segments[0].start == (5, 5)

    def test_single_contour_order_unchanged(self):
        contour = Contour(tuple(square_segments(5, 5, 10)), closed=True)
        assert len(reorder_contours([contour])) == 1

    def test_open_contour_directed_toward_origin(self):
        contour = Contour((seg(10, 10, 1, 1),), closed=False)
        out = reorder_contours([contour])[0]
        assert out.segments[0].start == (1, 1)


def svg_doc(paths, viewbox="0 0 200 200"):
    body = "".join(f'<path d="{d}"/>' for d in paths)
    return f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{viewbox}">{body}</svg>'


class TestDrawingFromSvg:
    def test_square_becomes_four_linetos(self):
        doc = svg_doc(["M 50 50 L 150 50 L 150 150 L 50 150 Z"])
        drawing = drawing_from_svg(doc, ViewLabel.FRONT)
        kinds = [t.kind for t in drawing.content]
        assert kinds == [SvgKind.LINE_TO] * 4
        assert len(drawing.tokens) == DRAWING_LEN

    def test_empty_content_is_all_eos(self):
        drawing = drawing_from_svg(svg_doc([]), ViewLabel.TOP)
        assert drawing.content == ()

    def test_too_many_segments_filtered(self):
        d = "M 0 0 " + " ".join(f"L {i} {i % 7}" for i in range(1, 151))
        from svg2cad.drawing import LengthExceededError
        with pytest.raises(LengthExceededError):
            drawing_from_svg(svg_doc([d]), ViewLabel.FRONT)

    def test_file_input(self, tmp_path):
        path = tmp_path / "drawing.svg"
        path.write_text(svg_doc(["M 0 0 L 200 0"]))
        drawing = drawing_from_svg(path, ViewLabel.RIGHT)
        assert len(drawing.content) == 1

    def test_token_carries_start_point(self):
        doc = svg_doc(["M 0 0 L 200 100"])
        drawing = drawing_from_svg(doc, ViewLabel.FRONT)
        token = drawing.content[0]
        assert token.params[0] == 0 and token.params[1] == 0
        assert token.params[6] == 255 and token.params[7] == 128

    def test_missing_viewbox_uses_content_bbox(self):
        doc = '<svg xmlns="http://www.w3.org/2000/svg"><path d="M 0 0 L 10 10"/></svg>'
        drawing = drawing_from_svg(doc, ViewLabel.FRONT)
        assert len(drawing.content) == 1
        assert drawing.content[0].params[6] == 255


class TestPipelineProperties:
    @staticmethod
    def run_pipeline(segments, viewbox):
        normalized = normalize_viewbox(segments, viewbox)
        return reorder_contours(build_contours(normalized))

    def random_scene(self, rng):
        segments = []
        for _ in range(rng.randint(1, 5)):
            x0, y0 = rng.uniform(0, 150), rng.uniform(0, 150)
            segments.extend(square_segments(x0, y0, rng.uniform(5, 40)))
        if rng.random() < 0.5:
            segments.append(seg(rng.uniform(0, 200), rng.uniform(0, 200),
                                rng.uniform(0, 200), rng.uniform(0, 200)))
        return segments

    def test_permutation_invariance(self):
        rng = random.Random(0)
        for _ in range(30):
            segments = self.random_scene(rng)
            base = self.run_pipeline(segments, (0, 0, 200, 200))
            for _ in range(3):
                shuffled = segments[:]
                rng.shuffle(shuffled)
                assert self.run_pipeline(shuffled, (0, 0, 200, 200)) == base

    def test_idempotence(self):
        rng = random.Random(1)
        for _ in range(30):
            segments = self.random_scene(rng)
            once = self.run_pipeline(segments, (0, 0, 200, 200))
            flat = [s for c in once for s in c.segments]
            twice = self.run_pipeline(flat, (0, 0, 200, 200))
            assert twice == once

    def test_orientation_property(self):
        rng = random.Random(2)
        for _ in range(20):
            segments = self.random_scene(rng)
            contours = self.run_pipeline(segments, (0, 0, 200, 200))
            for contour in contours:
                if contour.closed:
                    pts = [s.start for s in contour.segments]
                    area = sum(x0 * y1 - x1 * y0
                               for (x0, y0), (x1, y1) in zip(pts, pts[1:] + pts[:1]))
                    assert area >= 0

    def test_segment_conservation(self):
        rng = random.Random(3)
        for _ in range(20):
            segments = self.random_scene(rng)
            contours = self.run_pipeline(segments, (0, 0, 200, 200))
            assert sum(len(c.segments) for c in contours) == len(segments)
