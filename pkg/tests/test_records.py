import io
import json

import pytest

from svg2cad import cad
from svg2cad.cad import BoolOp, ExtentMode, pad_cad
from svg2cad.drawing import SvgKind, ViewLabel, make_token, pad_drawing
from svg2cad.records import (
    RecordError,
    SampleRecord,
    read_records,
    record_from_json,
    record_to_json,
    write_records,
)


def sample_record(rid="s0"):
    views = {}
    for i, view in enumerate(ViewLabel):
        tokens = [
            make_token(SvgKind.LINE_TO, [10.0 * i, 0, None, None, None, None, 50, 60]),
            make_token(SvgKind.CUBIC_BEZIER, [0, 0, 10, 20, 30, 40, 50, 60]),
        ]
        views[view] = pad_drawing(tokens, view)
    seq = pad_cad([
        cad.sol(), cad.line(0, 0), cad.line(128, 0), cad.line(128, 128), cad.line(0, 128),
        cad.extrude(128, 128, 128, 128, 128, 128, 200, 128,
                    int(BoolOp.NEW_BODY), int(ExtentMode.ONE_SIDED)),
    ])
    return SampleRecord(id=rid, views=views, cad=seq)


def test_write_read_round_trip(tmp_path):
    records = [sample_record(f"s{i}") for i in range(3)]
    path = tmp_path / "data.jsonl"
    write_records(path, records)
    loaded = read_records(path)
    assert loaded == records


def test_round_trip_via_stream():
    record = sample_record()
    buf = io.StringIO()
    write_records(buf, [record])
    buf.seek(0)
    assert read_records(buf) == [record]


def test_schema_field_present():
    obj = record_to_json(sample_record())
    assert obj["schema"] == 1
    assert set(obj["views"]) == {"front", "top", "right", "isometric"}


def test_missing_view_is_schema_error():
    obj = record_to_json(sample_record())
    del obj["views"]["top"]
    with pytest.raises(RecordError):
        record_from_json(obj)


def test_wrong_schema_version_rejected():
    obj = record_to_json(sample_record())
    obj["schema"] = 99
    with pytest.raises(RecordError):
        record_from_json(obj)


def test_truncated_line_reports_line_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    good = json.dumps(record_to_json(sample_record()))
    path.write_text(good + "\n" + good[: len(good) // 2] + "\n")
    with pytest.raises(RecordError, match="line 2"):
        read_records(path)


def test_blank_lines_skipped(tmp_path):
    path = tmp_path / "gaps.jsonl"
    good = json.dumps(record_to_json(sample_record()))
    path.write_text("\n" + good + "\n\n")
    assert len(read_records(path)) == 1
