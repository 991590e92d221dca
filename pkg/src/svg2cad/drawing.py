"""Quantized token representation of vector engineering drawings.

One drawing is a fixed-length sequence of SVG-style commands, each carrying
an 8-slot parameter list quantized to 8-bit bins over a 200x200 canvas.
Slots a command does not use hold the UNUSED sentinel (bin index 256).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

VIEWBOX_SIZE = 200.0
NUM_BINS = 256
UNUSED = 256
PARAM_CATEGORIES = NUM_BINS + 1  # 256 coordinate bins plus the UNUSED sentinel
NUM_PARAM_SLOTS = 8
DRAWING_LEN = 100


class DrawingError(ValueError):
    """Malformed drawing content."""


class LengthExceededError(DrawingError):
    """Drawing has more content tokens than the fixed sequence length allows."""


class SvgKind(enum.IntEnum):
    SOS = 0
    LINE_TO = 1
    CUBIC_BEZIER = 2
    EOS = 3


class ViewLabel(enum.IntEnum):
    FRONT = 0
    TOP = 1
    RIGHT = 2
    ISOMETRIC = 3

    @property
    def key(self) -> str:
        return self.name.lower()

    @classmethod
    def from_key(cls, key: str) -> "ViewLabel":
        try:
            return cls[key.upper()]
        except KeyError:
            raise DrawingError(f"unknown view label {key!r}") from None


# Slot layout: (x1, y1, cx1, cy1, cx2, cy2, x2, y2).
SVG_PARAM_MASKS: dict[SvgKind, tuple[bool, ...]] = {
    SvgKind.SOS: (False,) * 8,
    SvgKind.LINE_TO: (True, True, False, False, False, False, True, True),
    SvgKind.CUBIC_BEZIER: (True,) * 8,
    SvgKind.EOS: (False,) * 8,
}

_ALL_UNUSED = (UNUSED,) * NUM_PARAM_SLOTS


def quantize_coord(v: float) -> int:
    """Map a coordinate in [0, 200] to its 8-bit bin, rounding half away from zero."""
    if not math.isfinite(v) or v < 0.0 or v > VIEWBOX_SIZE:
        raise DrawingError(f"coordinate {v!r} outside [0, {VIEWBOX_SIZE}]")
    return int(math.floor(v / VIEWBOX_SIZE * (NUM_BINS - 1) + 0.5))


def dequantize_coord(b: int) -> float:
    """Map a bin index back to its coordinate; the UNUSED sentinel has none."""
    if b == UNUSED:
        raise DrawingError("UNUSED slot carries no coordinate")
    if not 0 <= b <= NUM_BINS - 1:
        raise DrawingError(f"bin index {b!r} outside 0..{NUM_BINS - 1}")
    return b * VIEWBOX_SIZE / (NUM_BINS - 1)


@dataclass(frozen=True)
class SvgToken:
    kind: SvgKind
    params: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.params) != NUM_PARAM_SLOTS:
            raise DrawingError(f"expected {NUM_PARAM_SLOTS} param slots, got {len(self.params)}")
        mask = SVG_PARAM_MASKS[self.kind]
        for slot, (used, value) in enumerate(zip(mask, self.params)):
            if used:
                if not 0 <= value <= NUM_BINS - 1:
                    raise DrawingError(f"{self.kind.name} slot {slot} holds {value}, want 0..{NUM_BINS - 1}")
            elif value != UNUSED:
                raise DrawingError(f"{self.kind.name} slot {slot} must be UNUSED, got {value}")


def make_token(kind: SvgKind, raw: Optional[Sequence[Optional[float]]] = None) -> SvgToken:
    """Quantize raw coordinates into a token, enforcing the per-kind slot mask.

    ``raw`` must be an 8-slot list for LINE_TO / CUBIC_BEZIER (entries in
    unused slots are ignored and may be None) and absent for SOS / EOS.
    """
    mask = SVG_PARAM_MASKS[kind]
    if not any(mask):
        if raw is not None:
            raise DrawingError(f"{kind.name} takes no parameters")
        return SvgToken(kind, _ALL_UNUSED)
    if raw is None:
        raise DrawingError(f"{kind.name} requires 8 raw parameters")
    if len(raw) != NUM_PARAM_SLOTS:
        raise DrawingError(f"expected {NUM_PARAM_SLOTS} raw parameters, got {len(raw)}")
    params = []
    for slot, used in enumerate(mask):
        if used:
            value = raw[slot]
            if value is None:
                raise DrawingError(f"{kind.name} slot {slot} missing")
            params.append(quantize_coord(float(value)))
        else:
            params.append(UNUSED)
    return SvgToken(kind, tuple(params))


EOS_TOKEN = SvgToken(SvgKind.EOS, _ALL_UNUSED)


@dataclass(frozen=True)
class DrawingSequence:
    """A single view's token sequence, padded with EOS to the fixed length."""

    view: ViewLabel
    tokens: tuple[SvgToken, ...]

    def __post_init__(self) -> None:
        if len(self.tokens) != DRAWING_LEN:
            raise DrawingError(f"drawing must hold {DRAWING_LEN} tokens, got {len(self.tokens)}")
        seen_eos = False
        for i, tok in enumerate(self.tokens):
            if seen_eos and tok.kind is not SvgKind.EOS:
                raise DrawingError(f"token {i} follows EOS but is {tok.kind.name}")
            if tok.kind is SvgKind.EOS:
                seen_eos = True
        if not seen_eos:
            raise DrawingError("drawing has no EOS terminator")

    @property
    def content(self) -> tuple[SvgToken, ...]:
        """Tokens before the first EOS."""
        for i, tok in enumerate(self.tokens):
            if tok.kind is SvgKind.EOS:
                return self.tokens[:i]
        return self.tokens  # unreachable: __post_init__ requires an EOS


def pad_drawing(tokens: Iterable[SvgToken], view: ViewLabel) -> DrawingSequence:
    """Terminate content tokens with one EOS and pad with EOS to the fixed length."""
    content = tuple(tokens)
    for i, tok in enumerate(content):
        if tok.kind in (SvgKind.EOS, SvgKind.SOS):
            raise DrawingError(f"content token {i} is {tok.kind.name}; only drawing commands allowed")
    if len(content) + 1 > DRAWING_LEN:
        raise LengthExceededError(
            f"{len(content)} content tokens exceed the {DRAWING_LEN - 1}-token budget"
        )
    padded = content + (EOS_TOKEN,) * (DRAWING_LEN - len(content))
    return DrawingSequence(view, padded)
