"""CAD operation sequence grammar: commands, per-kind slot masks, validation.

A sequence is a flat list of sketch-extrude commands. Sketch curves carry
their end point; a loop's traversal starts at the end point of its last
curve, so loops close by construction. Every parameter is a quantized index
in 0..255, with 256 as the UNUSED sentinel for slots a command ignores.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .drawing import NUM_BINS, UNUSED

CAD_LEN = 60
NUM_CAD_PARAM_SLOTS = 15

# Slot order: x, y, alpha, flag, radius, theta, gamma, px, py, ps, scale,
# e1, e2, bool_op, extent_mode.
SLOT_X, SLOT_Y, SLOT_ALPHA, SLOT_FLAG, SLOT_RADIUS = 0, 1, 2, 3, 4
SLOT_THETA, SLOT_GAMMA, SLOT_PX, SLOT_PY, SLOT_PS = 5, 6, 7, 8, 9
SLOT_SCALE, SLOT_E1, SLOT_E2, SLOT_BOOL, SLOT_EXTENT = 10, 11, 12, 13, 14

SLOT_NAMES = (
    "x", "y", "alpha", "flag", "radius", "theta", "gamma",
    "px", "py", "ps", "scale", "e1", "e2", "bool_op", "extent_mode",
)


class CadError(ValueError):
    """Malformed CAD sequence content."""


class CadKind(enum.IntEnum):
    SOL = 0
    LINE = 1
    ARC = 2
    CIRCLE = 3
    EXTRUDE = 4
    EOS = 5


class BoolOp(enum.IntEnum):
    NEW_BODY = 0
    JOIN = 1
    CUT = 2
    INTERSECT = 3


class ExtentMode(enum.IntEnum):
    ONE_SIDED = 0
    SYMMETRIC = 1
    TWO_SIDED = 2


CURVE_KINDS = (CadKind.LINE, CadKind.ARC, CadKind.CIRCLE)

_NONE = (False,) * NUM_CAD_PARAM_SLOTS


def _mask(*slots: int) -> tuple[bool, ...]:
    return tuple(i in slots for i in range(NUM_CAD_PARAM_SLOTS))


CAD_PARAM_MASKS: dict[CadKind, tuple[bool, ...]] = {
    CadKind.SOL: _NONE,
    CadKind.LINE: _mask(SLOT_X, SLOT_Y),
    CadKind.ARC: _mask(SLOT_X, SLOT_Y, SLOT_ALPHA, SLOT_FLAG),
    CadKind.CIRCLE: _mask(SLOT_X, SLOT_Y, SLOT_RADIUS),
    CadKind.EXTRUDE: _mask(
        SLOT_THETA, SLOT_GAMMA, SLOT_PX, SLOT_PY, SLOT_PS,
        SLOT_SCALE, SLOT_E1, SLOT_E2, SLOT_BOOL, SLOT_EXTENT,
    ),
    CadKind.EOS: _NONE,
}

ENUM_SLOTS: dict[int, int] = {SLOT_FLAG: 2, SLOT_BOOL: 4, SLOT_EXTENT: 3}
ANGLE_SLOTS = frozenset({SLOT_ALPHA, SLOT_THETA, SLOT_GAMMA})

# Continuous dequantization ranges. Angle slots use a periodic grid over
# [-pi, pi) with step 2*pi/256 so that 0 and multiples of pi/2 (axis-aligned
# sketch planes) land exactly on representable values; the generic
# endpoint-inclusive grid cannot represent them.
_RANGES: dict[int, tuple[float, float]] = {
    SLOT_X: (-1.0, 1.0), SLOT_Y: (-1.0, 1.0),
    SLOT_ALPHA: (-math.pi, math.pi),
    SLOT_RADIUS: (0.0, 1.0),
    SLOT_THETA: (-math.pi, math.pi), SLOT_GAMMA: (-math.pi, math.pi),
    SLOT_PX: (-1.0, 1.0), SLOT_PY: (-1.0, 1.0), SLOT_PS: (-1.0, 1.0),
    SLOT_SCALE: (0.0, 2.0),
    SLOT_E1: (-1.0, 1.0), SLOT_E2: (-1.0, 1.0),
}

ENUMERATED = "enumerated"

# Loop-closure gap tolerance: two quantization bins in sketch units.
TAU_CLOSE = 2 * (2.0 / (NUM_BINS - 1))


def param_range(slot: int):
    """Physical range (low, high) of a slot, or the ENUMERATED marker."""
    if not 0 <= slot < NUM_CAD_PARAM_SLOTS:
        raise CadError(f"slot index {slot} outside 0..{NUM_CAD_PARAM_SLOTS - 1}")
    if slot in ENUM_SLOTS:
        return ENUMERATED
    return _RANGES[slot]


def dequantize_param(slot: int, idx: int) -> float:
    """Continuous value of a quantized slot index."""
    if idx == UNUSED:
        raise CadError(f"slot {SLOT_NAMES[slot]} is UNUSED")
    if not 0 <= idx <= NUM_BINS - 1:
        raise CadError(f"index {idx} outside 0..{NUM_BINS - 1}")
    if slot in ENUM_SLOTS:
        return float(idx)
    low, high = _RANGES[slot]
    if slot in ANGLE_SLOTS:
        return low + idx * (high - low) / NUM_BINS
    return low + idx * (high - low) / (NUM_BINS - 1)


def quantize_param(slot: int, value: float) -> int:
    """Nearest quantized index for a continuous slot value."""
    if slot in ENUM_SLOTS:
        idx = int(round(value))
        if not 0 <= idx < ENUM_SLOTS[slot]:
            raise CadError(f"enumerated slot {SLOT_NAMES[slot]} value {value} out of range")
        return idx
    low, high = _RANGES[slot]
    if slot in ANGLE_SLOTS:
        span = high - low
        idx = int(math.floor((value - low) / span * NUM_BINS + 0.5)) % NUM_BINS
        return idx
    if not low <= value <= high:
        raise CadError(f"slot {SLOT_NAMES[slot]} value {value} outside [{low}, {high}]")
    return int(math.floor((value - low) / (high - low) * (NUM_BINS - 1) + 0.5))


@dataclass(frozen=True)
class CadCommand:
    kind: CadKind
    params: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.params) != NUM_CAD_PARAM_SLOTS:
            raise CadError(f"expected {NUM_CAD_PARAM_SLOTS} slots, got {len(self.params)}")
        mask = CAD_PARAM_MASKS[self.kind]
        for slot, (used, value) in enumerate(zip(mask, self.params)):
            if not 0 <= value <= UNUSED:
                raise CadError(f"slot {slot} value {value} outside 0..{UNUSED}")
            if not used and value != UNUSED:
                raise CadError(f"{self.kind.name} slot {SLOT_NAMES[slot]} must be UNUSED")

    def used_slots(self) -> tuple[int, ...]:
        mask = CAD_PARAM_MASKS[self.kind]
        return tuple(i for i in range(NUM_CAD_PARAM_SLOTS) if mask[i])


_ALL_UNUSED = (UNUSED,) * NUM_CAD_PARAM_SLOTS


def _command(kind: CadKind, **slots: int) -> CadCommand:
    params = list(_ALL_UNUSED)
    for name, value in slots.items():
        params[SLOT_NAMES.index(name)] = value
    return CadCommand(kind, tuple(params))


def sol() -> CadCommand:
    return _command(CadKind.SOL)


def eos() -> CadCommand:
    return _command(CadKind.EOS)


def line(x: int, y: int) -> CadCommand:
    return _command(CadKind.LINE, x=x, y=y)


def arc(x: int, y: int, alpha: int, flag: int) -> CadCommand:
    return _command(CadKind.ARC, x=x, y=y, alpha=alpha, flag=flag)


def circle(x: int, y: int, radius: int) -> CadCommand:
    return _command(CadKind.CIRCLE, x=x, y=y, radius=radius)


def extrude(theta: int, gamma: int, px: int, py: int, ps: int, scale: int,
            e1: int, e2: int, bool_op: int, extent_mode: int) -> CadCommand:
    return _command(
        CadKind.EXTRUDE, theta=theta, gamma=gamma, px=px, py=py, ps=ps,
        scale=scale, e1=e1, e2=e2, bool_op=bool_op, extent_mode=extent_mode,
    )


EOS_COMMAND = eos()


@dataclass(frozen=True)
class CadSequence:
    """Fixed-length command sequence; content ends at the first EOS."""

    commands: tuple[CadCommand, ...]

    def __post_init__(self) -> None:
        seen_eos = False
        for i, cmd in enumerate(self.commands):
            if seen_eos and cmd.kind is not CadKind.EOS:
                raise CadError(f"command {i} follows EOS but is {cmd.kind.name}")
            if cmd.kind is CadKind.EOS:
                seen_eos = True
        if not seen_eos:
            raise CadError("sequence has no EOS terminator")

    def __len__(self) -> int:
        return len(self.commands)

    @property
    def content(self) -> tuple[CadCommand, ...]:
        for i, cmd in enumerate(self.commands):
            if cmd.kind is CadKind.EOS:
                return self.commands[:i]
        return self.commands

    @property
    def kinds(self) -> tuple[CadKind, ...]:
        return tuple(cmd.kind for cmd in self.commands)


def pad_cad(commands: Iterable[CadCommand], length: int = CAD_LEN) -> CadSequence:
    """Terminate content with one EOS and pad with EOS to ``length``."""
    content = tuple(commands)
    for i, cmd in enumerate(content):
        if cmd.kind is CadKind.EOS:
            raise CadError(f"content command {i} is EOS")
    if len(content) + 1 > length:
        raise CadError(f"{len(content)} commands exceed the {length - 1}-command budget")
    return CadSequence(content + (EOS_COMMAND,) * (length - len(content)))


@dataclass(frozen=True)
class Violation:
    code: str
    position: int
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] at {self.position}: {self.message}"


def _loop_violations(curves: list[tuple[int, CadCommand]]) -> list[Violation]:
    """Geometric checks for one loop; ``curves`` pairs positions with commands."""
    out: list[Violation] = []
    pos0 = curves[0][0]
    kinds = [cmd.kind for _, cmd in curves]
    if CadKind.CIRCLE in kinds:
        if len(curves) > 1:
            out.append(Violation("open-loop", pos0, "circle mixed with other curves in one loop"))
            return out
        _, cmd = curves[0]
        if cmd.params[SLOT_RADIUS] == UNUSED:
            return out  # reported separately as a missing used slot
        if dequantize_param(SLOT_RADIUS, cmd.params[SLOT_RADIUS]) <= 0.0:
            out.append(Violation("open-loop", pos0, "circle with zero radius"))
        return out
    if any(cmd.params[SLOT_X] == UNUSED or cmd.params[SLOT_Y] == UNUSED for _, cmd in curves):
        return out  # missing slots reported separately
    points = [
        (dequantize_param(SLOT_X, cmd.params[SLOT_X]), dequantize_param(SLOT_Y, cmd.params[SLOT_Y]))
        for _, cmd in curves
    ]
    distinct = len({(round(x, 9), round(y, 9)) for x, y in points})
    if distinct < 3:
        out.append(Violation("open-loop", pos0, f"loop degenerates to {distinct} distinct vertices"))
        return out
    # Traversal starts at the last curve's end point; the vertex cycle must
    # bound area once realized.
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:] + points[:1]):
        area += x0 * y1 - x1 * y0
    if abs(area) * 0.5 <= TAU_CLOSE * TAU_CLOSE:
        out.append(Violation("open-loop", pos0, "loop bounds no area"))
    for i, (pos, cmd) in enumerate(curves):
        if cmd.kind is CadKind.ARC and cmd.params[SLOT_ALPHA] != UNUSED:
            start = points[i - 1]  # i == 0 wraps to the last curve's end point
            if math.dist(start, points[i]) <= 1e-12:
                out.append(Violation("open-loop", pos, "arc with zero-length chord"))
    return out


def validate_cad_sequence(seq: CadSequence) -> list[Violation]:
    """Grammar and geometric sanity checks; an empty list means valid."""
    out: list[Violation] = []
    content = seq.content
    if not content:
        out.append(Violation("empty-content", 0, "no commands before EOS"))
        return out

    for pos, cmd in enumerate(content):
        for slot in cmd.used_slots():
            value = cmd.params[slot]
            if value == UNUSED:
                out.append(Violation(
                    "missing-used-slot", pos,
                    f"{cmd.kind.name} slot {SLOT_NAMES[slot]} holds UNUSED"))
            elif slot in ENUM_SLOTS and value >= ENUM_SLOTS[slot]:
                out.append(Violation(
                    "enum-out-of-range", pos,
                    f"{cmd.kind.name} slot {SLOT_NAMES[slot]} value {value} "
                    f"outside 0..{ENUM_SLOTS[slot] - 1}"))

    loops: list[list[tuple[int, CadCommand]]] = []
    current: Optional[list[tuple[int, CadCommand]]] = None
    seen_extrude = False
    first_extrude_pos: Optional[int] = None
    for pos, cmd in enumerate(content):
        if cmd.kind is CadKind.SOL:
            if current is not None and not current:
                out.append(Violation("open-loop", pos, "loop start with no curves"))
            current = []
            loops.append(current)
        elif cmd.kind in CURVE_KINDS:
            if current is None:
                out.append(Violation("curve-outside-loop", pos, f"{cmd.kind.name} before any loop start"))
            else:
                current.append((pos, cmd))
        elif cmd.kind is CadKind.EXTRUDE:
            if first_extrude_pos is None:
                first_extrude_pos = pos
            complete = [lp for lp in loops if lp]
            if not complete:
                out.append(Violation("extrude-without-loop", pos, "no complete loop precedes this extrude"))
            if current is not None and not current:
                out.append(Violation("open-loop", pos, "loop start with no curves before extrude"))
            for lp in complete:
                out.extend(_loop_violations(lp))
            loops = []
            current = None
            seen_extrude = True
    if current is not None and not current:
        out.append(Violation("open-loop", len(content) - 1, "trailing loop start with no curves"))

    if first_extrude_pos is not None:
        cmd = content[first_extrude_pos]
        b = cmd.params[SLOT_BOOL]
        if b != UNUSED and b != BoolOp.NEW_BODY:
            out.append(Violation(
                "first-extrude-not-new-body", first_extrude_pos,
                f"first extrude has bool_op {b}, want {int(BoolOp.NEW_BODY)}"))
    if not seen_extrude:
        out.append(Violation("no-extrude", len(content) - 1, "sequence contains no extrude"))
    return out


def merge_outputs(kinds: Sequence[CadKind], args: Sequence[Sequence[int]]) -> CadSequence:
    """Combine decoder outputs: mask arguments per kind and truncate at the first EOS.

    A prediction with no EOS at all keeps its first length-1 commands; the
    fixed-length representation reserves the final slot for the terminator.
    """
    if len(kinds) != len(args):
        raise CadError(f"kinds ({len(kinds)}) and args ({len(args)}) lengths differ")
    length = len(kinds)
    commands: list[CadCommand] = []
    for kind, row in zip(kinds, args):
        if kind is CadKind.EOS or len(commands) == length - 1:
            break
        if len(row) != NUM_CAD_PARAM_SLOTS:
            raise CadError(f"argument row has {len(row)} slots, want {NUM_CAD_PARAM_SLOTS}")
        mask = CAD_PARAM_MASKS[kind]
        params = tuple(int(v) if used else UNUSED for used, v in zip(mask, row))
        commands.append(CadCommand(kind, params))
    return pad_cad(commands, length)


def sequence_equal_within(a: CadSequence, b: CadSequence, eta: int) -> bool:
    """True iff kinds match everywhere and every used slot differs by less than eta."""
    if eta < 0:
        raise CadError("eta must be nonnegative")
    if len(a) != len(b):
        return False
    for ca, cb in zip(a.commands, b.commands):
        if ca.kind is not cb.kind:
            return False
        for slot in ca.used_slots():
            if abs(ca.params[slot] - cb.params[slot]) >= eta:
                return False
    return True


def sequence_to_text(seq: CadSequence) -> str:
    """One command per line: kind name followed by the 15 slot indices."""
    lines = []
    for cmd in seq.commands:
        lines.append(" ".join([cmd.kind.name] + [str(v) for v in cmd.params]))
    return "\n".join(lines) + "\n"


def sequence_from_text(text: str, length: int = CAD_LEN) -> CadSequence:
    """Inverse of :func:`sequence_to_text`; trailing EOS padding may be omitted."""
    commands: list[CadCommand] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        raw = raw.strip()
        if not raw:
            continue
        fields = raw.split()
        if len(fields) != 1 + NUM_CAD_PARAM_SLOTS:
            raise CadError(f"line {lineno}: expected kind plus {NUM_CAD_PARAM_SLOTS} integers")
        try:
            kind = CadKind[fields[0]]
            params = tuple(int(v) for v in fields[1:])
        except (KeyError, ValueError) as exc:
            raise CadError(f"line {lineno}: {exc}") from None
        if kind is CadKind.EOS:
            break
        commands.append(CadCommand(kind, params))
    return pad_cad(commands, length)
