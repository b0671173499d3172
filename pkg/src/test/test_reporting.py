import json
import math

import pytest
from pydantic import BaseModel

from foliate.config import SCHEMA_FILE
from foliate.exceptions import OutputError
from foliate.services.reporting import (
    atomic_write,
    copy_schema,
    format_number,
    to_csv,
    to_json,
    write_csv,
    write_json,
)


class _Row(BaseModel):
    t: float
    ok: bool
    label: str


class _Report(BaseModel):
    zeta: float
    alpha: list[float]
    nested: dict[str, float | None]
    count: int


def _report():
    return _Report(
        zeta=1.0 / 3.0, alpha=[math.nan, 2.5], nested={"b": math.inf, "a": None}, count=3
    )


def test_format_number_keeps_seventeen_digits():
    assert format_number(1.0 / 3.0) == "0.33333333333333331"
    assert float(format_number(0.1 + 0.2)) == 0.1 + 0.2


def test_json_sorts_keys_and_nulls_non_finite():
    text = to_json(_report())
    data = json.loads(text)

    assert list(data) == ["alpha", "count", "nested", "zeta"]
    assert list(data["nested"]) == ["a", "b"]
    assert data["alpha"] == [None, 2.5]
    assert data["nested"]["b"] is None
    assert data["zeta"] == 1.0 / 3.0
    assert text.endswith("}\n")


def test_json_is_stable():
    assert to_json(_report()) == to_json(_report())


def test_json_keeps_whole_floats_as_floats():
    text = to_json(_Report(zeta=1.0, alpha=[], nested={}, count=1))

    assert '"zeta": 1.0' in text
    assert '"count": 1' in text
    assert isinstance(json.loads(text)["zeta"], float)


def test_csv_columns_follow_the_given_order():
    rows = [_Row(t=0.0, ok=True, label="a"), _Row(t=math.nan, ok=False, label="b")]

    text = to_csv(["label", "t", "ok"], rows)

    assert text.splitlines() == ["label,t,ok", "a,0,1", "b,nan,0"]


def test_writes_leave_no_temporary_files(tmp_path):
    out = tmp_path / "run"

    write_json(out / "report.json", _report())
    write_csv(out / "trace.csv", ["t"], [_Row(t=0.5, ok=True, label="x")])

    assert sorted(p.name for p in out.iterdir()) == ["report.json", "trace.csv"]
    assert (out / "trace.csv").read_text() == "t\n0.5\n"


def test_atomic_write_replaces_existing_file(tmp_path):
    path = tmp_path / "report.json"
    path.write_text("old")

    atomic_write(path, "new")

    assert path.read_text() == "new"
    assert list(tmp_path.iterdir()) == [path]


def test_atomic_write_cleans_up_on_failure(tmp_path, monkeypatch):
    def fail(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr("foliate.services.reporting.os.replace", fail)

    with pytest.raises(OutputError, match="disk full"):
        atomic_write(tmp_path / "report.json", "text")

    assert list(tmp_path.iterdir()) == []


def test_write_under_a_regular_file_is_an_output_error(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")

    with pytest.raises(OutputError):
        write_json(blocker / "sub" / "report.json", _report())
    with pytest.raises(OutputError):
        copy_schema(blocker / "sub")


def test_copy_schema(tmp_path):
    target = copy_schema(tmp_path / "out")

    assert target.name == "schema.txt"
    assert target.read_text() == SCHEMA_FILE.read_text()
    assert [p.name for p in target.parent.iterdir()] == ["schema.txt"]
