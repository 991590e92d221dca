"""SVG ingestion: parse path data, normalize geometry, order contours, tokenize.

The accepted grammar is the subset engineering-drawing exporters emit after
preprocessing: absolute/relative moveto, lineto, horizontal/vertical lineto,
cubic Bezier and closepath. Arcs and quadratics are rejected rather than
approximated so the ingest alphabet equals the token alphabet.

Contour extraction and ordering are canonicalized (sorted endpoints, fixed
walk rule) so the result is invariant under input segment permutation and
the whole normalize/contour/reorder pipeline is idempotent on its output.
"""

from __future__ import annotations

import math
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .drawing import (
    VIEWBOX_SIZE,
    DrawingSequence,
    SvgKind,
    ViewLabel,
    make_token,
    pad_drawing,
)

TAU_JOIN = 1e-3  # endpoint-matching tolerance, drawing units

_SUPPORTED = set("MmLlHhVvCcZz")
_CUBIC_SAMPLES = 32


class SvgParseError(ValueError):
    """Malformed or unsupported SVG input."""


class UnsupportedCommandError(SvgParseError):
    """Path uses a command outside the supported subset."""


Point = tuple[float, float]


@dataclass(frozen=True)
class Segment:
    kind: str  # "line" or "cubic"
    start: Point
    end: Point
    c1: Optional[Point] = None
    c2: Optional[Point] = None

    def __post_init__(self) -> None:
        has_controls = self.c1 is not None and self.c2 is not None
        if (self.kind == "cubic") != has_controls:
            raise SvgParseError(f"{self.kind} segment with controls {self.c1}, {self.c2}")
        for pt in (self.start, self.end, self.c1, self.c2):
            if pt is not None and not all(math.isfinite(c) for c in pt):
                raise SvgParseError(f"non-finite coordinate in {pt}")

    def reversed(self) -> "Segment":
        return Segment(self.kind, self.end, self.start, self.c2, self.c1)

    def transformed(self, scale: float, offset: Point) -> "Segment":
        def tx(pt: Optional[Point]) -> Optional[Point]:
            if pt is None:
                return None
            return (pt[0] * scale + offset[0], pt[1] * scale + offset[1])

        return Segment(self.kind, tx(self.start), tx(self.end), tx(self.c1), tx(self.c2))

    def length_hint(self) -> float:
        return math.dist(self.start, self.end)

    def sample_points(self) -> list[Point]:
        """Polyline approximation used for distances and orientation."""
        if self.kind == "line":
            return [self.start, self.end]
        pts = []
        for i in range(_CUBIC_SAMPLES + 1):
            t = i / _CUBIC_SAMPLES
            s = 1.0 - t
            x = (s ** 3 * self.start[0] + 3 * s * s * t * self.c1[0]
                 + 3 * s * t * t * self.c2[0] + t ** 3 * self.end[0])
            y = (s ** 3 * self.start[1] + 3 * s * s * t * self.c1[1]
                 + 3 * s * t * t * self.c2[1] + t ** 3 * self.end[1])
            pts.append((x, y))
        return pts


@dataclass(frozen=True)
class Contour:
    segments: tuple[Segment, ...]
    closed: bool


_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")


class _PathScanner:
    def __init__(self, d: str) -> None:
        self.d = d
        self.pos = 0

    def _skip(self) -> None:
        while self.pos < len(self.d) and (self.d[self.pos].isspace() or self.d[self.pos] == ","):
            self.pos += 1

    def peek_command(self) -> Optional[str]:
        self._skip()
        if self.pos >= len(self.d):
            return None
        ch = self.d[self.pos]
        return ch if ch.isalpha() else ""

    def take_command(self) -> str:
        ch = self.d[self.pos]
        self.pos += 1
        return ch

    def number(self) -> float:
        self._skip()
        m = _NUMBER.match(self.d, self.pos)
        if not m:
            raise SvgParseError(f"malformed number at byte {self.pos} in path data")
        self.pos = m.end()
        return float(m.group())

    def has_number(self) -> bool:
        self._skip()
        return self.pos < len(self.d) and _NUMBER.match(self.d, self.pos) is not None


def parse_path_data(d: str) -> list[Segment]:
    """Parse one path's data into absolute line/cubic segments.

    H/V lower to lines, Z emits the closing line back to the subpath start,
    and relative commands resolve against the running current point.
    """
    scanner = _PathScanner(d)
    segments: list[Segment] = []
    current: Optional[Point] = None
    subpath_start: Optional[Point] = None
    command: Optional[str] = None

    def require_current() -> Point:
        if current is None:
            raise SvgParseError("path data must start with a moveto")
        return current

    while True:
        head = scanner.peek_command()
        if head is None:
            break
        if head != "":
            letter = scanner.take_command()
            if letter not in _SUPPORTED:
                raise UnsupportedCommandError(
                    f"unsupported path command {letter!r}; only M, L, H, V, C, Z are accepted")
            command = letter
        elif command is None:
            raise SvgParseError(f"number before any command at byte {scanner.pos}")
        elif command in "Mm":
            command = "L" if command == "M" else "l"

        relative = command.islower()
        op = command.upper()
        if op == "Z":
            start = subpath_start
            if start is None:
                raise SvgParseError("closepath before any moveto")
            if current is not None and math.dist(current, start) > 1e-12:
                segments.append(Segment("line", current, start))
            current = start
            command = None
            continue

        if op == "M":
            x, y = scanner.number(), scanner.number()
            base = current if (relative and current is not None) else (0.0, 0.0)
            current = (base[0] + x, base[1] + y) if relative else (x, y)
            subpath_start = current
            continue

        if op == "L":
            x, y = scanner.number(), scanner.number()
            base = require_current()
            target = (base[0] + x, base[1] + y) if relative else (x, y)
        elif op == "H":
            x = scanner.number()
            base = require_current()
            target = (base[0] + x if relative else x, base[1])
        elif op == "V":
            y = scanner.number()
            base = require_current()
            target = (base[0], base[1] + y if relative else y)
        else:  # C
            nums = [scanner.number() for _ in range(6)]
            base = require_current()
            if relative:
                nums = [nums[i] + base[i % 2] for i in range(6)]
            segments.append(Segment("cubic", base, (nums[4], nums[5]),
                                    (nums[0], nums[1]), (nums[2], nums[3])))
            current = (nums[4], nums[5])
            continue

        if math.dist(base, target) > 1e-12:
            segments.append(Segment("line", base, target))
        current = target
    return segments


def normalize_viewbox(segments: Sequence[Segment],
                      viewbox: tuple[float, float, float, float]) -> list[Segment]:
    """Scale uniformly into the 200x200 canvas, centering the shorter axis."""
    min_x, min_y, width, height = viewbox
    if width <= 0 or height <= 0:
        raise SvgParseError(f"degenerate viewbox {viewbox}")
    scale = VIEWBOX_SIZE / max(width, height)
    offset = ((VIEWBOX_SIZE - scale * width) / 2.0 - scale * min_x,
              (VIEWBOX_SIZE - scale * height) / 2.0 - scale * min_y)
    return [seg.transformed(scale, offset) for seg in segments]


def _canonical_key(seg: Segment) -> tuple:
    a = (round(seg.start[0], 9), round(seg.start[1], 9))
    b = (round(seg.end[0], 9), round(seg.end[1], 9))
    lo, hi = (a, b) if a <= b else (b, a)
    extras = tuple(sorted(
        (round(p[0], 9), round(p[1], 9)) for p in (seg.c1, seg.c2) if p is not None))
    return (lo, hi, seg.kind, extras)


class _Clusters:
    """Endpoint clustering on a tau-sized grid with neighborhood lookup."""

    def __init__(self, tau: float) -> None:
        self.tau = tau
        self.centers: list[Point] = []
        self.grid: dict[tuple[int, int], list[int]] = {}

    def _cell(self, pt: Point) -> tuple[int, int]:
        return (int(math.floor(pt[0] / self.tau)), int(math.floor(pt[1] / self.tau)))

    def find_or_add(self, pt: Point) -> int:
        cx, cy = self._cell(pt)
        candidates = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for idx in self.grid.get((cx + dx, cy + dy), ()):
                    d = math.dist(pt, self.centers[idx])
                    if d <= self.tau:
                        candidates.append((d, idx))
        if candidates:
            return min(candidates)[1]
        idx = len(self.centers)
        self.centers.append(pt)
        self.grid.setdefault((cx, cy), []).append(idx)
        return idx


def build_contours(segments: Sequence[Segment], tau_join: float = TAU_JOIN) -> list[Contour]:
    """Chain segments into contours via an endpoint-adjacency graph.

    Vertices are endpoint clusters within tau_join; every connected component
    is decomposed into edge-disjoint trails (a junction of degree above two
    yields several), so the total segment count is conserved. Processing
    order is canonical, making the result input-order independent.
    """
    if tau_join <= 0:
        raise SvgParseError("tau_join must be positive")
    ordered = sorted(segments, key=_canonical_key)
    clusters = _Clusters(tau_join)
    # Cluster ids must not depend on segment order: seed clusters from the
    # globally sorted endpoint list first.
    endpoints = sorted({(round(p[0], 12), round(p[1], 12))
                        for seg in ordered for p in (seg.start, seg.end)})
    for pt in endpoints:
        clusters.find_or_add(pt)
    edges = []  # (va, vb, segment)
    adjacency: dict[int, list[int]] = {}
    for seg in ordered:
        va = clusters.find_or_add(seg.start)
        vb = clusters.find_or_add(seg.end)
        edge_id = len(edges)
        edges.append((va, vb, seg))
        adjacency.setdefault(va, []).append(edge_id)
        if vb != va:
            adjacency.setdefault(vb, []).append(edge_id)

    used = [False] * len(edges)
    degree = {v: len(ids) for v, ids in adjacency.items()}
    contours: list[Contour] = []

    def next_edge(vertex: int) -> Optional[int]:
        for eid in adjacency.get(vertex, ()):
            if not used[eid]:
                return eid
        return None

    def walk(start_vertex: int) -> None:
        trail: list[Segment] = []
        vertex = start_vertex
        while True:
            eid = next_edge(vertex)
            if eid is None:
                break
            used[eid] = True
            va, vb, seg = edges[eid]
            degree[va] -= 1
            if vb != va:
                degree[vb] -= 1
            if vertex == va:
                trail.append(seg)
                vertex = vb
            else:
                trail.append(seg.reversed())
                vertex = va
        if trail:
            contours.append(Contour(tuple(trail), closed=(vertex == start_vertex)))

    order = sorted(adjacency)
    # Open chains first: starting at odd-degree vertices keeps trails maximal.
    for vertex in order:
        while degree.get(vertex, 0) % 2 == 1 and next_edge(vertex) is not None:
            walk(vertex)
    for vertex in order:
        while next_edge(vertex) is not None:
            walk(vertex)
    return contours


def _contour_samples(contour: Contour) -> list[Point]:
    pts: list[Point] = []
    for seg in contour.segments:
        pts.extend(seg.sample_points()[:-1])
    if contour.segments:
        pts.append(contour.segments[-1].end)
    return pts


def _point_segment_distance(p: Point, a: Point, b: Point) -> tuple[float, Point]:
    ab = (b[0] - a[0], b[1] - a[1])
    denom = ab[0] ** 2 + ab[1] ** 2
    if denom <= 0:
        return math.dist(p, a), a
    t = max(0.0, min(1.0, ((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / denom))
    q = (a[0] + t * ab[0], a[1] + t * ab[1])
    return math.dist(p, q), q


def _nearest_to_origin(contour: Contour) -> tuple[float, Point]:
    best = (math.inf, (math.inf, math.inf))
    samples = _contour_samples(contour)
    for a, b in zip(samples, samples[1:]):
        d, q = _point_segment_distance((0.0, 0.0), a, b)
        key = (d, q[1], q[0])
        if key < (best[0], best[1][1], best[1][0]):
            best = (d, q)
    return best


def _signed_area(contour: Contour) -> float:
    pts = _contour_samples(contour)
    area = 0.0
    for (x0, y0), (x1, y1) in zip(pts, pts[1:] + pts[:1]):
        area += x0 * y1 - x1 * y0
    return 0.5 * area


def reorder_contours(contours: Sequence[Contour]) -> list[Contour]:
    """Sort contours by distance from the canvas origin and orient them clockwise.

    Closed contours are reversed when their signed area in the y-down frame
    is negative and rotated so they start at the vertex nearest the origin.
    Open contours are directed so the endpoint nearer the origin comes first.
    """
    normalized: list[tuple[tuple, Contour]] = []
    for contour in contours:
        if contour.closed:
            if _signed_area(contour) < 0.0:
                contour = Contour(tuple(s.reversed() for s in reversed(contour.segments)),
                                  closed=True)
            starts = [seg.start for seg in contour.segments]
            pick = min(range(len(starts)),
                       key=lambda i: (starts[i][0] ** 2 + starts[i][1] ** 2,
                                      starts[i][1], starts[i][0]))
            contour = Contour(contour.segments[pick:] + contour.segments[:pick], closed=True)
        else:
            first, last = contour.segments[0].start, contour.segments[-1].end
            key_first = (first[0] ** 2 + first[1] ** 2, first[1], first[0])
            key_last = (last[0] ** 2 + last[1] ** 2, last[1], last[0])
            if key_last < key_first:
                contour = Contour(tuple(s.reversed() for s in reversed(contour.segments)),
                                  closed=False)
        dist, nearest = _nearest_to_origin(contour)
        normalized.append(((dist, nearest[1], nearest[0]), contour))
    normalized.sort(key=lambda item: item[0])
    return [contour for _, contour in normalized]


def _clamp_canvas(value: float) -> float:
    if -1e-6 <= value < 0.0:
        return 0.0
    if VIEWBOX_SIZE < value <= VIEWBOX_SIZE + 1e-6:
        return VIEWBOX_SIZE
    return value


def sequence_from_segments(segments: Sequence[Segment],
                           viewbox: tuple[float, float, float, float],
                           view: ViewLabel,
                           tau_join: float = TAU_JOIN) -> DrawingSequence:
    """Normalize, order and quantize segments into a drawing sequence."""
    normalized = normalize_viewbox(segments, viewbox)
    contours = reorder_contours(build_contours(normalized, tau_join))
    tokens = []
    for contour in contours:
        for seg in contour.segments:
            coords = [seg.start, seg.c1, seg.c2, seg.end]
            raw: list[Optional[float]] = []
            for pt in coords:
                if pt is None:
                    raw.extend([None, None])
                else:
                    raw.extend([_clamp_canvas(pt[0]), _clamp_canvas(pt[1])])
            kind = SvgKind.LINE_TO if seg.kind == "line" else SvgKind.CUBIC_BEZIER
            tokens.append(make_token(kind, raw))
    return pad_drawing(tokens, view)


def _iter_path_data(root: ET.Element) -> Iterable[str]:
    for element in root.iter():
        tag = element.tag.rsplit("}", 1)[-1]
        if tag == "path" and element.get("d"):
            yield element.get("d")


def _parse_viewbox(root: ET.Element) -> Optional[tuple[float, float, float, float]]:
    raw = root.get("viewBox")
    if raw is None:
        return None
    fields = raw.replace(",", " ").split()
    if len(fields) != 4:
        raise SvgParseError(f"viewBox must hold 4 numbers, got {raw!r}")
    try:
        x, y, w, h = (float(f) for f in fields)
    except ValueError:
        raise SvgParseError(f"viewBox must hold numbers, got {raw!r}") from None
    return (x, y, w, h)


def _content_bbox(segments: Sequence[Segment]) -> tuple[float, float, float, float]:
    pts = [p for seg in segments for p in seg.sample_points()]
    if not pts:
        return (0.0, 0.0, VIEWBOX_SIZE, VIEWBOX_SIZE)
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    width = max(max(xs) - min(xs), 1e-9)
    height = max(max(ys) - min(ys), 1e-9)
    return (min(xs), min(ys), width, height)


def drawing_from_svg(source: Union[str, Path], view: ViewLabel,
                     tau_join: float = TAU_JOIN) -> DrawingSequence:
    """Full ingest chain for one SVG document (a path or document text)."""
    text = source
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                    and source.strip().endswith(".svg")):
        text = Path(source).read_text(encoding="utf-8")
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise SvgParseError(f"not a parseable SVG document: {exc}") from None
    segments: list[Segment] = []
    for d in _iter_path_data(root):
        segments.extend(parse_path_data(d))
    viewbox = _parse_viewbox(root)
    if viewbox is None:
        viewbox = _content_bbox(segments)
    return sequence_from_segments(segments, viewbox, view, tau_join)
