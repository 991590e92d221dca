"""Newline-delimited dataset records pairing four drawing views with a CAD sequence.

Each line is one JSON object: ``id`` (string), ``schema`` (integer, 1),
``views`` (map of view name to token list) and ``cad`` (command list).
Token and command lists hold content only; the fixed-length EOS padding is
reapplied on read. Bin indices are plain integers with UNUSED as 256.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, Union

from .cad import CAD_LEN, CadCommand, CadKind, CadSequence, pad_cad
from .drawing import DrawingSequence, SvgKind, SvgToken, ViewLabel, pad_drawing

SCHEMA_VERSION = 1

REQUIRED_VIEWS = (ViewLabel.FRONT, ViewLabel.TOP, ViewLabel.RIGHT, ViewLabel.ISOMETRIC)


class RecordError(ValueError):
    """Malformed dataset record."""


@dataclass(frozen=True)
class SampleRecord:
    id: str
    views: dict[ViewLabel, DrawingSequence]
    cad: CadSequence

    def __post_init__(self) -> None:
        missing = [v.key for v in REQUIRED_VIEWS if v not in self.views]
        if missing:
            raise RecordError(f"record {self.id!r} missing views: {', '.join(missing)}")


def _token_to_json(tok: SvgToken) -> dict:
    return {"kind": tok.kind.name.lower(), "params": list(tok.params)}


def _token_from_json(obj: dict) -> SvgToken:
    kind = SvgKind[obj["kind"].upper()]
    return SvgToken(kind, tuple(int(v) for v in obj["params"]))


def _command_to_json(cmd: CadCommand) -> dict:
    return {"kind": cmd.kind.name.lower(), "params": list(cmd.params)}


def _command_from_json(obj: dict) -> CadCommand:
    kind = CadKind[obj["kind"].upper()]
    return CadCommand(kind, tuple(int(v) for v in obj["params"]))


def record_to_json(record: SampleRecord) -> dict:
    return {
        "id": record.id,
        "schema": SCHEMA_VERSION,
        "views": {
            view.key: [_token_to_json(t) for t in record.views[view].content]
            for view in REQUIRED_VIEWS
        },
        "cad": [_command_to_json(c) for c in record.cad.content],
    }


def record_from_json(obj: dict, cad_len: int = CAD_LEN) -> SampleRecord:
    schema = obj.get("schema")
    if schema != SCHEMA_VERSION:
        raise RecordError(f"unsupported schema {schema!r}, want {SCHEMA_VERSION}")
    views = {}
    raw_views = obj["views"]
    for view in REQUIRED_VIEWS:
        if view.key not in raw_views:
            raise RecordError(f"missing view {view.key!r}")
        tokens = [_token_from_json(t) for t in raw_views[view.key]]
        views[view] = pad_drawing(tokens, view)
    cad = pad_cad([_command_from_json(c) for c in obj["cad"]], cad_len)
    return SampleRecord(id=str(obj["id"]), views=views, cad=cad)


def write_records(target: Union[str, Path, IO[str]], records: Iterable[SampleRecord]) -> None:
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8") as fh:
            write_records(fh, records)
        return
    for record in records:
        target.write(json.dumps(record_to_json(record), separators=(",", ":")) + "\n")


def iter_records(source: Union[str, Path, IO[str]], cad_len: int = CAD_LEN) -> Iterator[SampleRecord]:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            yield from iter_records(fh, cad_len)
        return
    for lineno, raw in enumerate(source, start=1):
        raw = raw.strip()
        if not raw:
            continue
        try:
            obj = json.loads(raw)
            yield record_from_json(obj, cad_len)
        except RecordError as exc:
            raise RecordError(f"line {lineno}: {exc}") from None
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise RecordError(f"line {lineno}: malformed record ({exc})") from None


def read_records(source: Union[str, Path, IO[str]], cad_len: int = CAD_LEN) -> list[SampleRecord]:
    return list(iter_records(source, cad_len))
