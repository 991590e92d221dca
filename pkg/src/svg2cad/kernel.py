"""Minimal sketch-extrude geometry kernel.

Solids are ordered lists of extrusion bodies combined by boolean operations
evaluated through point membership, not B-rep surgery: enough to decide
validity and to sample surface points for Chamfer evaluation.

Conventions fixed here:
  * Sketch plane orientation from (theta, gamma) as spherical angles of the
    plane normal n = (sin t cos g, sin t sin g, cos t); the in-plane axes are
    u = (cos t cos g, cos t sin g, -sin t) and v = n x u. theta = gamma = 0
    gives the world xy plane with u = +x, v = +y.
  * A sketch point (a, b) maps to origin + scale * (a*u + b*v); extrusion
    extents are world distances along n, not scaled.
  * Extent mode: one-sided spans [0, e1], symmetric [-e1/2, e1/2],
    two-sided [-e2, e1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .cad import (
    SLOT_ALPHA,
    SLOT_BOOL,
    SLOT_E1,
    SLOT_E2,
    SLOT_EXTENT,
    SLOT_FLAG,
    SLOT_GAMMA,
    SLOT_PS,
    SLOT_PX,
    SLOT_PY,
    SLOT_RADIUS,
    SLOT_SCALE,
    SLOT_THETA,
    SLOT_X,
    SLOT_Y,
    BoolOp,
    CadKind,
    CadSequence,
    CURVE_KINDS,
    ExtentMode,
    dequantize_param,
    validate_cad_sequence,
)

DEFAULT_SAMPLE_COUNT = 2000
TAU_CHORD_REL = 1e-3  # chord error budget, fraction of profile bbox diagonal
TAU_ON_REL = 1e-4     # on-surface tolerance, fraction of solid bbox diagonal

_MIN_ARC_SEGMENTS = 4
_MAX_ARC_SEGMENTS = 512


class GeometryError(ValueError):
    """Invalid geometric construction."""


class SamplingError(GeometryError):
    """Surface sampling cannot produce the requested points."""


@dataclass(frozen=True)
class InvalidityReason:
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


@dataclass(frozen=True)
class Profile:
    """Closed 2D loops in sketch coordinates; first loop is the outer boundary."""

    loops: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if not self.loops:
            raise GeometryError("profile needs at least one loop")
        areas = [abs(_shoelace(loop)) for loop in self.loops]
        if max(areas) != areas[0]:
            raise GeometryError("outer loop (largest area) must come first")

    @property
    def area(self) -> float:
        areas = [abs(_shoelace(loop)) for loop in self.loops]
        return max(areas[0] - sum(areas[1:]), 0.0)

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        pts = np.concatenate(self.loops)
        return pts.min(axis=0), pts.max(axis=0)


def _shoelace(loop: np.ndarray) -> float:
    x, y = loop[:, 0], loop[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _points_in_loops(pts: np.ndarray, loops: Sequence[np.ndarray]) -> np.ndarray:
    """Even-odd parity of ray crossings over all loop edges."""
    crossings = np.zeros(len(pts), dtype=np.int64)
    px = pts[:, 0][:, None]
    py = pts[:, 1][:, None]
    for loop in loops:
        x0 = loop[None, :, 0]
        y0 = loop[None, :, 1]
        x1 = np.roll(loop[:, 0], -1)[None, :]
        y1 = np.roll(loop[:, 1], -1)[None, :]
        straddles = (y0 > py) != (y1 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = x0 + (py - y0) / (y1 - y0) * (x1 - x0)
        crossings += np.count_nonzero(straddles & (px < xi), axis=1)
    return crossings % 2 == 1


def _distance_to_loops(pts: np.ndarray, loops: Sequence[np.ndarray]) -> np.ndarray:
    best = np.full(len(pts), np.inf)
    for loop in loops:
        a = loop
        b = np.roll(loop, -1, axis=0)
        ab = b - a
        length_sq = np.maximum((ab * ab).sum(axis=1), 1e-300)
        ap = pts[:, None, :] - a[None, :, :]
        t = np.clip((ap * ab[None, :, :]).sum(axis=2) / length_sq[None, :], 0.0, 1.0)
        closest = a[None, :, :] + t[:, :, None] * ab[None, :, :]
        d = np.linalg.norm(pts[:, None, :] - closest, axis=2)
        best = np.minimum(best, d.min(axis=1))
    return best


def point_in_profile(pt: Sequence[float], profile: Profile, tol: float = 0.0) -> bool:
    """Even-odd membership; with tol > 0, a band around the boundary counts as inside."""
    pts = np.asarray([pt], dtype=np.float64)
    inside = _points_in_loops(pts, profile.loops)[0]
    if not inside and tol > 0.0:
        inside = bool(_distance_to_loops(pts, profile.loops)[0] <= tol)
    return bool(inside)


def frame_from_angles(theta: float, gamma: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sketch plane frame (n, u, v) for the documented spherical convention."""
    st, ct = math.sin(theta), math.cos(theta)
    sg, cg = math.sin(gamma), math.cos(gamma)
    n = np.array([st * cg, st * sg, ct])
    u = np.array([ct * cg, ct * sg, -st])
    v = np.cross(n, u)
    return n, u, v


def extent_range(e1: float, e2: float, mode: ExtentMode) -> tuple[float, float]:
    """Signed extrusion span along the sketch normal for the extent mode."""
    if mode is ExtentMode.ONE_SIDED:
        return tuple(sorted((0.0, e1)))
    if mode is ExtentMode.SYMMETRIC:
        h = abs(e1) / 2.0
        return (-h, h)
    return (-e2, e1)


@dataclass(frozen=True)
class ExtrusionBody:
    profile: Profile
    origin: tuple[float, float, float]
    theta: float
    gamma: float
    scale: float
    e1: float
    e2: float
    bool_op: BoolOp
    extent_mode: ExtentMode

    def __post_init__(self) -> None:
        if self.scale <= 0.0:
            raise GeometryError(f"scale must be positive, got {self.scale}")
        lo, hi = self.extent
        if hi - lo <= 0.0:
            raise GeometryError(f"empty extrusion extent [{lo}, {hi}]")

    @property
    def frame(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return frame_from_angles(self.theta, self.gamma)

    @property
    def extent(self) -> tuple[float, float]:
        return extent_range(self.e1, self.e2, self.extent_mode)

    def world_from_sketch(self, ab: np.ndarray, t: np.ndarray) -> np.ndarray:
        n, u, v = self.frame
        origin = np.asarray(self.origin)
        return (origin[None, :]
                + self.scale * (ab[:, 0:1] * u[None, :] + ab[:, 1:2] * v[None, :])
                + np.asarray(t).reshape(-1, 1) * n[None, :])

    def contains(self, pts: np.ndarray, tol: float = 0.0) -> np.ndarray:
        n, u, v = self.frame
        d = pts - np.asarray(self.origin)[None, :]
        t = d @ n
        a = (d @ u) / self.scale
        b = (d @ v) / self.scale
        lo, hi = self.extent
        in_extent = (t >= lo - tol) & (t <= hi + tol)
        ab = np.stack([a, b], axis=1)
        in_profile = _points_in_loops(ab, self.profile.loops)
        if tol > 0.0:
            band = _distance_to_loops(ab, self.profile.loops) <= tol / self.scale
            in_profile = in_profile | band
        return in_extent & in_profile

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        (ax0, ay0), (ax1, ay1) = self.profile.bbox
        corners = np.array([[ax0, ay0], [ax1, ay0], [ax1, ay1], [ax0, ay1]])
        lo, hi = self.extent
        pts = np.concatenate([
            self.world_from_sketch(corners, np.full(4, lo)),
            self.world_from_sketch(corners, np.full(4, hi)),
        ])
        return pts.min(axis=0), pts.max(axis=0)


@dataclass(frozen=True)
class Solid:
    bodies: tuple[ExtrusionBody, ...]

    def __post_init__(self) -> None:
        if not self.bodies:
            raise GeometryError("solid needs at least one body")
        if self.bodies[0].bool_op is not BoolOp.NEW_BODY:
            raise GeometryError("first body must be a new body")

    def contains(self, pts: np.ndarray, tol: float = 0.0) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        inside = self.bodies[0].contains(pts, tol)
        for body in self.bodies[1:]:
            member = body.contains(pts, tol)
            if body.bool_op is BoolOp.CUT:
                inside = inside & ~member
            elif body.bool_op is BoolOp.INTERSECT:
                inside = inside & member
            else:  # JOIN; a later NEW_BODY coexists, which is a union for membership
                inside = inside | member
        return inside

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        los, his = zip(*(b.bbox for b in self.bodies))
        return np.min(los, axis=0), np.max(his, axis=0)

    @property
    def surface_tolerance(self) -> float:
        lo, hi = self.bbox
        return TAU_ON_REL * float(np.linalg.norm(hi - lo))


def point_in_solid(pt: Sequence[float], solid: Solid, tol: float = 0.0) -> bool:
    return bool(solid.contains(np.asarray([pt], dtype=np.float64), tol)[0])


# ---------------------------------------------------------------------------
# Sequence -> geometry


@dataclass(frozen=True)
class LoopGeometry:
    """Raw loop before polygonization: a vertex chain or an exact circle."""

    kind: str  # "poly" or "circle"
    vertices: Optional[np.ndarray] = None       # poly: curve end points, in order
    arcs: tuple = ()                            # poly: (index, sweep, ccw) per arc curve
    center: Optional[tuple[float, float]] = None
    radius: float = 0.0


@dataclass(frozen=True)
class BodyGeometry:
    loops: tuple[LoopGeometry, ...]
    theta: float
    gamma: float
    origin: tuple[float, float, float]
    scale: float
    e1: float
    e2: float
    bool_op: BoolOp
    extent_mode: ExtentMode


def parse_body_geometry(seq: CadSequence) -> list[BodyGeometry]:
    """Dequantize a validated sequence into per-extrusion raw geometry."""
    bodies: list[BodyGeometry] = []
    loops: list[LoopGeometry] = []
    current: Optional[list] = None  # [(kind, extras...), ...]

    def close_current() -> None:
        nonlocal current
        if current is None:
            return
        if current and current[0][0] is CadKind.CIRCLE:
            _, cx, cy, r = current[0]
            loops.append(LoopGeometry("circle", center=(cx, cy), radius=r))
        elif current:
            vertices = np.array([(x, y) for _, x, y, *_ in current])
            arcs = tuple((i, sweep, ccw) for i, (k, _x, _y, *rest) in enumerate(current)
                         if k is CadKind.ARC for sweep, ccw in [rest])
            loops.append(LoopGeometry("poly", vertices=vertices, arcs=arcs))
        current = None

    for cmd in seq.content:
        if cmd.kind is CadKind.SOL:
            close_current()
            current = []
        elif cmd.kind in CURVE_KINDS:
            if current is None:
                raise GeometryError("curve outside a loop")
            x = dequantize_param(SLOT_X, cmd.params[SLOT_X])
            y = dequantize_param(SLOT_Y, cmd.params[SLOT_Y])
            if cmd.kind is CadKind.CIRCLE:
                r = dequantize_param(SLOT_RADIUS, cmd.params[SLOT_RADIUS])
                current.append((CadKind.CIRCLE, x, y, r))
            elif cmd.kind is CadKind.ARC:
                sweep = dequantize_param(SLOT_ALPHA, cmd.params[SLOT_ALPHA]) % (2 * math.pi)
                ccw = cmd.params[SLOT_FLAG] == 1
                current.append((CadKind.ARC, x, y, sweep, ccw))
            else:
                current.append((CadKind.LINE, x, y))
        elif cmd.kind is CadKind.EXTRUDE:
            close_current()
            p = cmd.params
            bodies.append(BodyGeometry(
                loops=tuple(loops),
                theta=dequantize_param(SLOT_THETA, p[SLOT_THETA]),
                gamma=dequantize_param(SLOT_GAMMA, p[SLOT_GAMMA]),
                origin=(dequantize_param(SLOT_PX, p[SLOT_PX]),
                        dequantize_param(SLOT_PY, p[SLOT_PY]),
                        dequantize_param(SLOT_PS, p[SLOT_PS])),
                scale=dequantize_param(SLOT_SCALE, p[SLOT_SCALE]),
                e1=dequantize_param(SLOT_E1, p[SLOT_E1]),
                e2=dequantize_param(SLOT_E2, p[SLOT_E2]),
                bool_op=BoolOp(p[SLOT_BOOL]),
                extent_mode=ExtentMode(p[SLOT_EXTENT]),
            ))
            loops = []
    return bodies


def _arc_points(start: np.ndarray, end: np.ndarray, sweep: float, ccw: bool,
                chord_tol: float) -> np.ndarray:
    """Points along the arc after ``start`` up to and including ``end``."""
    chord = float(np.linalg.norm(end - start))
    if sweep < 1e-9 or chord < 1e-12:
        return end[None, :]
    r = chord / (2.0 * math.sin(sweep / 2.0))
    h = r * math.cos(sweep / 2.0)
    mid = (start + end) / 2.0
    direction = (end - start) / chord
    left = np.array([-direction[1], direction[0]])
    center = mid + left * h if ccw else mid - left * h
    a0 = math.atan2(start[1] - center[1], start[0] - center[0])
    span = sweep if ccw else -sweep
    ratio = max(-1.0, min(1.0, 1.0 - chord_tol / max(r, 1e-12)))
    per_seg = 2.0 * math.acos(ratio)
    m = int(np.clip(math.ceil(sweep / max(per_seg, 1e-9)), _MIN_ARC_SEGMENTS, _MAX_ARC_SEGMENTS))
    angles = a0 + span * np.arange(1, m + 1) / m
    pts = center[None, :] + r * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    pts[-1] = end  # land exactly on the commanded end point
    return pts


def _circle_points(center: tuple[float, float], radius: float, chord_tol: float) -> np.ndarray:
    ratio = max(-1.0, min(1.0, 1.0 - chord_tol / max(radius, 1e-12)))
    per_seg = 2.0 * math.acos(ratio)
    m = int(np.clip(math.ceil(2.0 * math.pi / max(per_seg, 1e-9)),
                    max(_MIN_ARC_SEGMENTS * 3, 12), _MAX_ARC_SEGMENTS))
    angles = 2.0 * math.pi * np.arange(m) / m
    return np.stack([center[0] + radius * np.cos(angles),
                     center[1] + radius * np.sin(angles)], axis=1)


def _loop_bbox(loop: LoopGeometry) -> tuple[np.ndarray, np.ndarray]:
    if loop.kind == "circle":
        c = np.asarray(loop.center)
        r = loop.radius
        return c - r, c + r
    return loop.vertices.min(axis=0), loop.vertices.max(axis=0)


def polygonize_loops(loops: Sequence[LoopGeometry]) -> tuple[np.ndarray, ...]:
    """Polyline approximation of each loop at the shared chord tolerance."""
    los, his = zip(*(_loop_bbox(lp) for lp in loops))
    diag = float(np.linalg.norm(np.max(his, axis=0) - np.min(los, axis=0)))
    chord_tol = max(TAU_CHORD_REL * diag, 1e-12)
    polys = []
    for lp in loops:
        if lp.kind == "circle":
            polys.append(_circle_points(lp.center, lp.radius, chord_tol))
            continue
        vertices = lp.vertices
        arcs = dict((i, (sweep, ccw)) for i, sweep, ccw in lp.arcs)
        # Traversal starts at the last curve's end point.
        pts: list[np.ndarray] = [vertices[-1]]
        for i, vertex in enumerate(vertices):
            if i in arcs:
                sweep, ccw = arcs[i]
                arc_pts = _arc_points(pts[-1], vertex, sweep, ccw, chord_tol)
                pts.extend(arc_pts)
            else:
                pts.append(vertex)
        poly = np.array(pts[:-1])  # drop the duplicated closing vertex
        polys.append(poly)
    order = sorted(range(len(polys)), key=lambda i: -abs(_shoelace(polys[i])))
    return tuple(polys[i] for i in order)


def reconstruct(seq: CadSequence) -> Union[Solid, InvalidityReason]:
    """Build a solid from a sequence; any defect becomes an InvalidityReason."""
    violations = validate_cad_sequence(seq)
    if violations:
        v = violations[0]
        return InvalidityReason(v.code, str(v))
    try:
        raw_bodies = parse_body_geometry(seq)
        bodies = []
        for raw in raw_bodies:
            profile = Profile(polygonize_loops(raw.loops))
            bodies.append(ExtrusionBody(
                profile=profile, origin=raw.origin, theta=raw.theta, gamma=raw.gamma,
                scale=raw.scale, e1=raw.e1, e2=raw.e2,
                bool_op=raw.bool_op, extent_mode=raw.extent_mode,
            ))
        return Solid(tuple(bodies))
    except GeometryError as exc:
        return InvalidityReason("geometry", str(exc))


# ---------------------------------------------------------------------------
# Surface sampling


@dataclass
class _Region:
    area: float
    body: ExtrusionBody
    kind: str                      # "wall" or "cap"
    p0: Optional[np.ndarray] = None
    p1: Optional[np.ndarray] = None
    t_value: float = 0.0


def _regions(solid: Solid) -> list[_Region]:
    regions: list[_Region] = []
    for body in solid.bodies:
        lo, hi = body.extent
        height = hi - lo
        for loop in body.profile.loops:
            a = loop
            b = np.roll(loop, -1, axis=0)
            for p0, p1 in zip(a, b):
                length = float(np.linalg.norm(p1 - p0)) * body.scale
                if length <= 0.0:
                    continue
                regions.append(_Region(area=length * height, body=body, kind="wall", p0=p0, p1=p1))
        cap_area = body.profile.area * body.scale ** 2
        for t in (lo, hi):
            regions.append(_Region(area=cap_area, body=body, kind="cap", t_value=t))
    return [r for r in regions if r.area > 0.0]


def _allocate(total: int, weights: np.ndarray) -> np.ndarray:
    """Largest-remainder apportionment of ``total`` by nonnegative weights."""
    shares = weights / weights.sum() * total
    counts = np.floor(shares).astype(int)
    short = total - counts.sum()
    if short > 0:
        order = np.argsort(-(shares - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def _jitter_grid(n: int, rng: np.random.Generator) -> np.ndarray:
    """n stratified points in the unit square: one uniform point per chosen cell."""
    g = max(1, math.ceil(math.sqrt(n)))
    cells = rng.permutation(g * g)[:n]
    coords = np.stack([cells % g, cells // g], axis=1).astype(np.float64)
    return (coords + rng.random((n, 2))) / g


def _sample_region(region: _Region, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Candidate surface points and their local normals for one region."""
    body = region.body
    normal_axis, u, v = body.frame
    st = _jitter_grid(n, rng)
    if region.kind == "wall":
        lo, hi = body.extent
        ab = region.p0[None, :] + st[:, 0:1] * (region.p1 - region.p0)[None, :]
        t = lo + st[:, 1] * (hi - lo)
        pts = body.world_from_sketch(ab, t)
        edge = (region.p1 - region.p0)
        edge = edge / np.linalg.norm(edge)
        m = -edge[1] * u + edge[0] * v
        normals = np.broadcast_to(m, pts.shape)
        return pts, normals
    bb_lo, bb_hi = body.profile.bbox
    ab = bb_lo[None, :] + st * (bb_hi - bb_lo)[None, :]
    keep = _points_in_loops(ab, body.profile.loops)
    ab = ab[keep]
    pts = body.world_from_sketch(ab, np.full(len(ab), region.t_value))
    normals = np.broadcast_to(normal_axis, pts.shape)
    return pts, normals


def sample_shape(solid: Solid, k: int = DEFAULT_SAMPLE_COUNT,
                 seed: int = 0) -> np.ndarray:
    """Sample k points on the boundary of the composed solid.

    Candidates are stratified per region proportionally to area; a candidate
    survives iff solid membership flips across +-tau_on along its local
    normal, so faces swallowed by boolean composition are rejected.
    Deterministic for a given (solid, k, seed).
    """
    if k < 1:
        raise GeometryError("k must be at least 1")
    regions = _regions(solid)
    if not regions:
        raise SamplingError("solid has no surface regions")
    areas = np.array([r.area for r in regions])
    tau = solid.surface_tolerance
    rng = np.random.default_rng(seed)
    accepted: list[np.ndarray] = []
    count = 0
    fruitless = 0
    for _ in range(500):
        need = k - count
        if need <= 0:
            break
        counts = _allocate(need, areas)
        pts_list, nrm_list = [], []
        for region, n in zip(regions, counts):
            if n == 0:
                continue
            pts, normals = _sample_region(region, int(n), rng)
            pts_list.append(pts)
            nrm_list.append(normals)
        if not pts_list:
            continue
        pts = np.concatenate(pts_list)
        normals = np.concatenate(nrm_list)
        inside_lo = solid.contains(pts - tau * normals)
        inside_hi = solid.contains(pts + tau * normals)
        keep = inside_lo != inside_hi
        kept = pts[keep]
        if len(kept):
            accepted.append(kept[: k - count])
            count += len(accepted[-1])
            fruitless = 0
        else:
            fruitless += 1
            if fruitless >= 3 and count == 0:
                raise SamplingError("boolean composition leaves no surface area")
    if count < k:
        raise SamplingError(f"sampling stalled at {count}/{k} surface points")
    return np.concatenate(accepted)


def save_points(path: Union[str, Path], pts: np.ndarray) -> None:
    """One 'x y z' triple per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in np.asarray(pts, dtype=np.float64):
            fh.write(f"{x:.9g} {y:.9g} {z:.9g}\n")


def load_points(path: Union[str, Path]) -> np.ndarray:
    pts = np.loadtxt(path, dtype=np.float64, ndmin=2)
    if pts.shape[1] != 3:
        raise GeometryError(f"expected 3 columns in {path}, got {pts.shape[1]}")
    return pts
