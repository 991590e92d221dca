"""Synthetic paired data: random sketch-extrude models and their four views.

Generated sequences use bin-snapped parameters so the ground truth is exactly
representable, axis-aligned sketch planes, and rectangle/circle profiles.
Wireframes are drawn without hidden-line removal: every body contributes all
of its edges regardless of occlusion, which keeps pairs self-consistent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import cad
from .cad import (
    SLOT_E1,
    SLOT_E2,
    BoolOp,
    CadKind,
    CadSequence,
    ExtentMode,
    pad_cad,
    validate_cad_sequence,
)
from .drawing import (
    VIEWBOX_SIZE,
    DrawingSequence,
    LengthExceededError,
    SvgKind,
    ViewLabel,
    dequantize_coord,
)
from .kernel import (
    BodyGeometry,
    GeometryError,
    extent_range,
    frame_from_angles,
    parse_body_geometry,
)
from .records import SampleRecord
from .svg_ingest import Segment, sequence_from_segments

BEZIER_CIRCLE_KAPPA = 4.0 * (math.sqrt(2.0) - 1.0) / 3.0

_COS30 = math.cos(math.pi / 6)
_SIN30 = math.sin(math.pi / 6)

# (theta_bin, gamma_bin) per sketch plane; bins 128/192 dequantize to exactly
# 0 and pi/2 on the periodic angle grid, keeping plane normals axis-aligned.
PLANE_BINS = {
    "xy": (128, 128),  # normal +z
    "yz": (192, 128),  # normal +x
    "xz": (192, 192),  # normal +y
}

ORTHO_VIEWS = {
    ViewLabel.FRONT: (np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]), np.array([0.0, 1.0, 0.0])),
    ViewLabel.TOP: (np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), np.array([0.0, 0.0, 1.0])),
    ViewLabel.RIGHT: (np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]), np.array([1.0, 0.0, 0.0])),
}
ISO_PROJECTION = np.array([[_COS30, -_COS30, 0.0], [_SIN30, _SIN30, -1.0]])
ISO_DIRECTION = np.array([1.0, 1.0, 1.0]) / math.sqrt(3.0)


class SynthError(ValueError):
    """Generator cannot satisfy its own constraints."""


@dataclass(frozen=True)
class GenSpec:
    """Knobs for the random model generator; all parameters are bin indices."""

    min_extrusions: int = 1
    max_extrusions: int = 2
    profiles: tuple[str, ...] = ("rect", "circle")
    planes: tuple[str, ...] = ("xy", "xz", "yz")
    second_ops: tuple[str, ...] = ("join", "cut")
    rect_lo: int = 30            # smallest corner bin
    rect_hi: int = 225           # largest corner bin
    rect_min_width: int = 50     # bins
    rect_max_width: int = 110
    circle_radius_lo: int = 35   # radius bins (range [0, 1])
    circle_radius_hi: int = 70
    origin_lo: int = 83          # plane-origin bins, about [-0.35, 0.35]
    origin_hi: int = 172
    scale_lo: int = 38           # scale bins, about [0.3, 0.7]
    scale_hi: int = 90
    extent_lo: int = 153         # e1 bins, about [0.2, 0.6]
    extent_hi: int = 204
    cut_margin: int = 12         # interior clearance for cutters, bins

    def __post_init__(self) -> None:
        if not 1 <= self.min_extrusions <= self.max_extrusions <= 2:
            raise SynthError("extrusion count range must sit within 1..2")
        if not set(self.profiles) <= {"rect", "circle"}:
            raise SynthError(f"unknown profiles in {self.profiles}")
        if not set(self.planes) <= set(PLANE_BINS):
            raise SynthError(f"unknown planes in {self.planes}")
        if not set(self.second_ops) <= {"join", "cut"}:
            raise SynthError(f"unknown boolean ops in {self.second_ops}")


def _rect_loop(rng: np.random.Generator, spec: GenSpec) -> list[cad.CadCommand]:
    x0 = int(rng.integers(spec.rect_lo, spec.rect_hi - spec.rect_min_width))
    y0 = int(rng.integers(spec.rect_lo, spec.rect_hi - spec.rect_min_width))
    x1 = int(rng.integers(x0 + spec.rect_min_width,
                          min(x0 + spec.rect_max_width, spec.rect_hi) + 1))
    y1 = int(rng.integers(y0 + spec.rect_min_width,
                          min(y0 + spec.rect_max_width, spec.rect_hi) + 1))
    return [cad.sol(), cad.line(x0, y0), cad.line(x1, y0), cad.line(x1, y1), cad.line(x0, y1)]


def _circle_loop(rng: np.random.Generator, spec: GenSpec) -> list[cad.CadCommand]:
    r = int(rng.integers(spec.circle_radius_lo, spec.circle_radius_hi + 1))
    # center bins step 2/255, radius bins step 1/255: keep the disc inside
    # the sketch square with a one-bin margin
    reach = (r + 2) // 2 + 1
    cx = int(rng.integers(reach + 1, 255 - reach))
    cy = int(rng.integers(reach + 1, 255 - reach))
    return [cad.sol(), cad.circle(cx, cy, r)]


def _extrude_cmd(rng: np.random.Generator, spec: GenSpec, plane: str,
                 bool_op: BoolOp) -> cad.CadCommand:
    theta, gamma = PLANE_BINS[plane]
    return cad.extrude(
        theta=theta, gamma=gamma,
        px=int(rng.integers(spec.origin_lo, spec.origin_hi + 1)),
        py=int(rng.integers(spec.origin_lo, spec.origin_hi + 1)),
        ps=int(rng.integers(spec.origin_lo, spec.origin_hi + 1)),
        scale=int(rng.integers(spec.scale_lo, spec.scale_hi + 1)),
        e1=int(rng.integers(spec.extent_lo, spec.extent_hi + 1)),
        e2=128,
        bool_op=int(bool_op), extent_mode=int(ExtentMode.ONE_SIDED),
    )


def _cutter_for(base_loop: list[cad.CadCommand], base_extrude: cad.CadCommand,
                rng: np.random.Generator, spec: GenSpec) -> list[cad.CadCommand]:
    """A through-hole cutter strictly inside the base profile, on the same plane."""
    m = spec.cut_margin
    if base_loop[1].kind is CadKind.CIRCLE:
        circle = base_loop[1]
        cx, cy = circle.params[0], circle.params[1]
        rb = circle.params[4]
        rc = int(rng.integers(max(8, rb // 4), max(9, rb - m)))
        loop = [cad.sol(), cad.circle(cx, cy, rc)]
    else:
        xs = sorted({c.params[0] for c in base_loop[1:]})
        ys = sorted({c.params[1] for c in base_loop[1:]})
        x0, x1 = xs[0] + m, xs[-1] - m
        y0, y1 = ys[0] + m, ys[-1] - m
        cx0 = int(rng.integers(x0, x1 - 16))
        cy0 = int(rng.integers(y0, y1 - 16))
        cx1 = int(rng.integers(cx0 + 16, x1 + 1))
        cy1 = int(rng.integers(cy0 + 16, y1 + 1))
        loop = [cad.sol(), cad.line(cx0, cy0), cad.line(cx1, cy0),
                cad.line(cx1, cy1), cad.line(cx0, cy1)]
    p = list(base_extrude.params)
    p[SLOT_E1] = min(p[SLOT_E1] + 13, 255)   # overshoot the top cap
    p[SLOT_E2] = 141                          # about 0.1 below the sketch plane
    p[cad.SLOT_BOOL] = int(BoolOp.CUT)
    p[cad.SLOT_EXTENT] = int(ExtentMode.TWO_SIDED)
    cutter = cad.CadCommand(CadKind.EXTRUDE, tuple(p))
    return loop + [cutter]


def random_cad_sequence(spec: GenSpec, seed: int) -> CadSequence:
    """Deterministic random model; every output passes validation by construction."""
    rng = np.random.default_rng(seed)
    n_ext = int(rng.integers(spec.min_extrusions, spec.max_extrusions + 1))
    profile = str(rng.choice(spec.profiles))
    plane = str(rng.choice(spec.planes))
    base_loop = _rect_loop(rng, spec) if profile == "rect" else _circle_loop(rng, spec)
    base_extrude = _extrude_cmd(rng, spec, plane, BoolOp.NEW_BODY)
    commands = base_loop + [base_extrude]
    if n_ext == 2:
        op = str(rng.choice(spec.second_ops))
        if op == "cut":
            commands += _cutter_for(base_loop, base_extrude, rng, spec)
        else:
            profile2 = str(rng.choice(spec.profiles))
            plane2 = str(rng.choice(spec.planes))
            loop2 = _rect_loop(rng, spec) if profile2 == "rect" else _circle_loop(rng, spec)
            commands += loop2 + [_extrude_cmd(rng, spec, plane2, BoolOp.JOIN)]
    seq = pad_cad(commands)
    violations = validate_cad_sequence(seq)
    if violations:
        raise SynthError(f"generator emitted an invalid sequence: {violations[0]}")
    return seq


# ---------------------------------------------------------------------------
# Wireframes and projections


@dataclass(frozen=True)
class Segment3D:
    p0: tuple[float, float, float]
    p1: tuple[float, float, float]


@dataclass(frozen=True)
class Circle3D:
    center: tuple[float, float, float]
    radius: float
    u: tuple[float, float, float]
    v: tuple[float, float, float]
    # vector to the partner cap along the cylinder axis, when one exists
    axis_mate: Optional[tuple[float, float, float]] = None


Edge3D = Union[Segment3D, Circle3D]


def wireframe_edges(bodies: Sequence[BodyGeometry]) -> list[Edge3D]:
    """Cap and lateral edges for every body, independent of boolean ops."""
    edges: list[Edge3D] = []
    for body in bodies:
        n, u, v = frame_from_angles(body.theta, body.gamma)
        origin = np.asarray(body.origin)
        lo, hi = extent_range(body.e1, body.e2, body.extent_mode)

        def world(ab: np.ndarray, t: float) -> np.ndarray:
            return origin + body.scale * (ab[0] * u + ab[1] * v) + t * n

        for loop in body.loops:
            if loop.kind == "circle":
                center = np.asarray(loop.center)
                r = loop.radius * body.scale
                axis = (hi - lo) * n
                for t, mate in ((lo, axis), (hi, -axis)):
                    edges.append(Circle3D(tuple(world(center, t)), r, tuple(u), tuple(v),
                                          axis_mate=tuple(mate)))
                continue
            if loop.arcs:
                raise GeometryError("arc profiles are outside the generator vocabulary")
            verts = loop.vertices
            rings = {t: [world(p, t) for p in verts] for t in (lo, hi)}
            for t in (lo, hi):
                ring = rings[t]
                for a, b in zip(ring, ring[1:] + ring[:1]):
                    edges.append(Segment3D(tuple(a), tuple(b)))
            for a, b in zip(rings[lo], rings[hi]):
                edges.append(Segment3D(tuple(a), tuple(b)))
    return edges


def _silhouette_segments(circle: Circle3D, direction: np.ndarray) -> list[Segment3D]:
    if circle.axis_mate is None:
        return []
    u = np.asarray(circle.u)
    v = np.asarray(circle.v)
    ud = float(u @ direction)
    vd = float(v @ direction)
    if math.hypot(ud, vd) < 1e-12:
        return []  # axis parallel to the view direction: no lateral silhouette
    phi = math.atan2(-ud, vd)
    out = []
    center = np.asarray(circle.center)
    mate = np.asarray(circle.axis_mate)
    for angle in (phi, phi + math.pi):
        p = center + circle.radius * (math.cos(angle) * u + math.sin(angle) * v)
        out.append(Segment3D(tuple(p), tuple(p + mate)))
    return out


def ellipse_to_beziers(center: Sequence[float], semi_axes: Sequence[float],
                       rotation: float) -> list[Segment]:
    """Standard four-arc cubic approximation of an ellipse."""
    a, b = semi_axes
    if a <= 0 or b <= 0:
        raise GeometryError(f"semi-axes must be positive, got {semi_axes}")
    k = BEZIER_CIRCLE_KAPPA
    quarters = [
        ((1, 0), (1, k), (k, 1), (0, 1)),
        ((0, 1), (-k, 1), (-1, k), (-1, 0)),
        ((-1, 0), (-1, -k), (-k, -1), (0, -1)),
        ((0, -1), (k, -1), (1, -k), (1, 0)),
    ]
    cos_r, sin_r = math.cos(rotation), math.sin(rotation)

    def tx(p: tuple[float, float]) -> tuple[float, float]:
        x, y = p[0] * a, p[1] * b
        return (center[0] + cos_r * x - sin_r * y, center[1] + sin_r * x + cos_r * y)

    return [Segment("cubic", tx(p0), tx(p3), tx(p1), tx(p2)) for p0, p1, p2, p3 in quarters]


def _project(edges: Sequence[Edge3D], matrix: np.ndarray,
             direction: np.ndarray) -> list[Segment]:
    expanded: list[Edge3D] = []
    for edge in edges:
        expanded.append(edge)
        if isinstance(edge, Circle3D):
            expanded.extend(_silhouette_segments(edge, direction))
    out: list[Segment] = []
    for edge in expanded:
        if isinstance(edge, Segment3D):
            p0 = matrix @ np.asarray(edge.p0)
            p1 = matrix @ np.asarray(edge.p1)
            if float(np.linalg.norm(p1 - p0)) > 1e-9:
                out.append(Segment("line", tuple(p0), tuple(p1)))
            continue
        c2 = matrix @ np.asarray(edge.center)
        f1 = matrix @ (edge.radius * np.asarray(edge.u))
        f2 = matrix @ (edge.radius * np.asarray(edge.v))
        m = np.column_stack([f1, f2])
        basis, axes, _ = np.linalg.svd(m)
        major, minor = float(axes[0]), float(axes[1])
        if major <= 1e-12:
            continue  # circle projects to a point
        if minor <= 1e-9 * major:
            tip = major * basis[:, 0]
            out.append(Segment("line", tuple(c2 - tip), tuple(c2 + tip)))
            continue
        rotation = math.atan2(float(basis[1, 0]), float(basis[0, 0]))
        out.extend(ellipse_to_beziers(tuple(c2), (major, minor), rotation))
    return _dedup(out)


def _dedup(segments: Sequence[Segment]) -> list[Segment]:
    """Coincident edges (e.g. front and back cap of an axis view) collapse to one."""
    seen = set()
    out = []
    for seg in segments:
        fwd = (seg.start, seg.c1, seg.c2, seg.end)
        rev = (seg.end, seg.c2, seg.c1, seg.start)
        key = min(
            tuple(None if p is None else (round(p[0], 9), round(p[1], 9)) for p in fwd),
            tuple(None if p is None else (round(p[0], 9), round(p[1], 9)) for p in rev),
            key=str,
        )
        if key in seen:
            continue
        seen.add(key)
        out.append(seg)
    return out


def project_orthographic(edges: Sequence[Edge3D], view: ViewLabel) -> list[Segment]:
    if view not in ORTHO_VIEWS:
        raise SynthError(f"{view} is not an orthographic view")
    matrix, direction = ORTHO_VIEWS[view]
    return _project(edges, matrix, direction)


def project_isometric(edges: Sequence[Edge3D]) -> list[Segment]:
    return _project(edges, ISO_PROJECTION, ISO_DIRECTION)


def _square_viewbox(all_segments: Sequence[Sequence[Segment]],
                    margin: float = 0.08) -> tuple[float, float, float, float]:
    pts = [p for group in all_segments for s in group for p in s.sample_points()]
    if not pts:
        return (0.0, 0.0, 1.0, 1.0)
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    side = max(max(xs) - min(xs), max(ys) - min(ys), 1e-9) * (1.0 + 2 * margin)
    cx = (max(xs) + min(xs)) / 2.0
    cy = (max(ys) + min(ys)) / 2.0
    return (cx - side / 2.0, cy - side / 2.0, side, side)


def render_views(seq: CadSequence) -> dict[ViewLabel, DrawingSequence]:
    """Project a sequence's wireframe to the four standard views and tokenize.

    All four drawings share one square source viewbox so the views keep a
    common scale after normalization.
    """
    violations = validate_cad_sequence(seq)
    if violations:
        raise SynthError(f"cannot render an invalid sequence: {violations[0]}")
    edges = wireframe_edges(parse_body_geometry(seq))
    projected = {
        view: project_orthographic(edges, view)
        for view in (ViewLabel.FRONT, ViewLabel.TOP, ViewLabel.RIGHT)
    }
    projected[ViewLabel.ISOMETRIC] = project_isometric(edges)
    viewbox = _square_viewbox(list(projected.values()))
    return {
        view: sequence_from_segments(segments, viewbox, view)
        for view, segments in projected.items()
    }


def generate_dataset(spec: GenSpec, count: int, seed: int,
                     id_prefix: str = "synth") -> list[SampleRecord]:
    """Paired samples with per-sample derived seeds; oversized drawings retry."""
    records = []
    for i in range(count):
        for attempt in range(32):
            sample_seed = seed * 1_000_003 + i * 97 + attempt
            seq = random_cad_sequence(spec, sample_seed)
            try:
                views = render_views(seq)
            except LengthExceededError:
                continue
            records.append(SampleRecord(id=f"{id_prefix}-{seed}-{i:05d}", views=views, cad=seq))
            break
        else:
            raise SynthError(f"sample {i} exceeded the drawing budget in 32 attempts")
    return records


def svg_from_drawing(drawing: DrawingSequence) -> str:
    """Standalone SVG document: one path element per pen-connected token run."""
    paths: list[str] = []
    current: list[str] = []
    last_end: Optional[tuple[int, int]] = None
    for token in drawing.content:
        p = token.params
        start = (p[0], p[1])
        if start != last_end:
            if current:
                paths.append(" ".join(current))
            sx, sy = dequantize_coord(p[0]), dequantize_coord(p[1])
            current = [f"M {sx:.4f} {sy:.4f}"]
        ex, ey = dequantize_coord(p[6]), dequantize_coord(p[7])
        if token.kind is SvgKind.LINE_TO:
            current.append(f"L {ex:.4f} {ey:.4f}")
        else:
            c1x, c1y = dequantize_coord(p[2]), dequantize_coord(p[3])
            c2x, c2y = dequantize_coord(p[4]), dequantize_coord(p[5])
            current.append(f"C {c1x:.4f} {c1y:.4f} {c2x:.4f} {c2y:.4f} {ex:.4f} {ey:.4f}")
        last_end = (p[6], p[7])
    if current:
        paths.append(" ".join(current))
    body = "\n".join(f'  <path d="{d}" fill="none" stroke="black" stroke-width="0.5"/>'
                     for d in paths)
    return (
        '<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="0 0 {VIEWBOX_SIZE:g} {VIEWBOX_SIZE:g}">\n' + body + "\n</svg>\n"
    )


def write_view_svgs(record: SampleRecord, out_dir: Union[str, Path]) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for view, drawing in record.views.items():
        path = out_dir / f"{record.id}_{view.key}.svg"
        path.write_text(svg_from_drawing(drawing), encoding="utf-8")
        written.append(path)
    return written
