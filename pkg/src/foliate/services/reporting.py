"""
Report and trace writers.

Every file is written once, through a temporary file in the target
directory and `os.replace`, so readers never see a partial report. CSV
numbers use 17 significant digits; JSON numbers use the shortest text that
parses back to the same double. Non-finite values become null (JSON) or nan
(CSV). Filesystem failures surface as `OutputError`.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import shutil
import tempfile
from collections.abc import Callable, Iterable, Sequence
from datetime import datetime

try:
    from datetime import UTC
except ImportError:  # Python < 3.11
    from datetime import timezone

    UTC = timezone.utc
from pathlib import Path
from typing import Any

from pydantic import BaseModel

from foliate.config import SCHEMA_FILE
from foliate.exceptions import output_error

logger = logging.getLogger("foliate.reporting")


def timestamp() -> str:
    return datetime.now(UTC).isoformat(timespec="seconds")


def format_number(value: float) -> str:
    return format(value, ".17g")


def _finite(value: Any) -> Any:
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {str(k): _finite(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_finite(v) for v in value]
    return value


def to_json(model: BaseModel) -> str:
    data = _finite(model.model_dump(mode="json"))
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def _write(path: Path, fill: Callable[[str], None]) -> Path:
    tmp = None
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        os.close(fd)
        fill(tmp)
        os.replace(tmp, path)
    except OSError as exc:
        raise output_error(f"Cannot write {path}: {exc.strerror or exc}") from exc
    finally:
        if tmp is not None and os.path.exists(tmp):
            os.unlink(tmp)
    return path


def atomic_write(path: Path, text: str) -> Path:
    def fill(tmp: str) -> None:
        with open(tmp, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)

    _write(path, fill)
    logger.debug("wrote %s (%d bytes)", path, len(text))
    return path


def write_json(path: Path, model: BaseModel) -> Path:
    return atomic_write(path, to_json(model))


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return format_number(value) if math.isfinite(value) else "nan"
    return str(value)


def to_csv(columns: Sequence[str], rows: Iterable[BaseModel]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        data = row.model_dump(mode="python")
        writer.writerow([_cell(data[c]) for c in columns])
    return buffer.getvalue()


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[BaseModel]) -> Path:
    return atomic_write(path, to_csv(columns, rows))


def copy_schema(directory: Path, name: str = "schema.txt") -> Path:
    """Place the configuration and report format description next to the outputs."""
    return _write(directory / name, lambda tmp: shutil.copyfile(SCHEMA_FILE, tmp))
