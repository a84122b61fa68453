from __future__ import annotations

import csv
import io
import logging
from collections.abc import Iterable, Mapping, Sequence
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from pathlib import Path

from python_rotkit.const import FLOAT_FORMAT, RepresentationType
from python_rotkit.exceptions import DataError
from python_rotkit.model import REPRESENTATION_CLASSES, FloatArray, Representation, RunRecord

_LOGGER = logging.getLogger(__name__)

_HEADER_PREFIX = "#"


def format_value(value: float | int | str | np.generic) -> str:
    """17 significant digits for floats, so text round-trips to the same double."""
    if isinstance(value, bool | np.bool_):
        return str(int(value))
    if isinstance(value, int | np.integer):
        return str(int(value))
    if isinstance(value, float | np.floating):
        return format(float(value), FLOAT_FORMAT)
    return str(value)


def _parse_header(line: str, lineno: int) -> dict[str, str]:
    if not line.startswith(_HEADER_PREFIX):
        raise DataError(f"line {lineno}: expected a '# rep=<tag> order=<fields>' header")
    header: dict[str, str] = {}
    for token in line[len(_HEADER_PREFIX) :].split():
        key, sep, value = token.partition("=")
        if not sep:
            raise DataError(f"line {lineno}: malformed header token {token!r}")
        header[key] = value
    return header


def _parse_rows(lines: Iterable[tuple[int, str]], width: int) -> FloatArray:
    rows: list[list[float]] = []
    for lineno, line in lines:
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != width:
            raise DataError(f"line {lineno}: expected {width} values, got {len(cells)}")
        try:
            rows.append([float(cell) for cell in cells])
        except ValueError as ex:
            raise DataError(f"line {lineno}: {ex}") from ex
    return np.array(rows, dtype=np.float64).reshape(len(rows), width)


def _read_header(text: str) -> tuple[type[Representation], list[str], list[tuple[int, str]]]:
    lines = text.splitlines()
    if not lines:
        raise DataError("line 1: representation CSV is empty, header required")
    header = _parse_header(lines[0], 1)
    try:
        cls = REPRESENTATION_CLASSES[RepresentationType(header.get("rep", ""))]
    except ValueError as ex:
        raise DataError(f"line 1: unknown representation {header.get('rep')!r}") from ex
    order = header.get("order", "").split(",")
    return cls, order, list(enumerate(lines[1:], start=2))


def representation_header(cls: type[Representation], pairs: bool = False) -> str:
    fields = cls.fields * 2 if pairs else cls.fields
    return f"# rep={cls.tag.value} order={','.join(fields)}"


def representation_to_csv(rep: Representation) -> str:
    values = rep.values.reshape(-1, rep.dim)
    lines = [representation_header(type(rep))]
    lines.extend(",".join(format_value(v) for v in row) for row in values)
    return "\n".join(lines) + "\n"


def representation_from_csv(text: str) -> Representation:
    cls, order, body = _read_header(text)
    if tuple(order) != cls.fields:
        raise DataError(f"line 1: {cls.tag.value} expects order {','.join(cls.fields)}, got {','.join(order)}")
    return cls(_parse_rows(body, len(cls.fields)))


def representation_pairs_from_csv(text: str) -> tuple[Representation, Representation]:
    """Rows holding two representation values side by side."""
    cls, order, body = _read_header(text)
    if tuple(order) != cls.fields * 2:
        raise DataError(f"line 1: paired {cls.tag.value} file expects its field order twice")
    values = _parse_rows(body, 2 * len(cls.fields))
    return cls(values[:, : len(cls.fields)]), cls(values[:, len(cls.fields) :])


def records_to_csv(records: Iterable[RunRecord], schema: Sequence[str]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(schema)
    for record in records:
        writer.writerow([format_value(record.get(column)) for column in schema])
    return buffer.getvalue()


def column_to_csv(name: str, values: Iterable[float]) -> str:
    return "\n".join([name, *(format_value(v) for v in values)]) + "\n"


def table_from_csv(text: str) -> tuple[list[str], list[list[str]]]:
    """Header and string rows of a result CSV."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration as ex:
        raise DataError("line 1: CSV has no header row") from ex
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} columns, got {len(row)}")
        rows.append(row)
    return header, rows


def meta_to_text(meta: Mapping[str, object]) -> str:
    lines = []
    for key, value in meta.items():
        if isinstance(value, tuple | list):
            text = ",".join(format_value(v) for v in value)  # type: ignore[arg-type]
        else:
            text = format_value(value)  # type: ignore[arg-type]
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def meta_from_text(text: str) -> dict[str, str]:
    meta = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DataError(f"line {lineno}: expected 'key = value', got {raw!r}")
        meta[key.strip()] = value.strip()
    return meta


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    _LOGGER.debug("wrote %s (%d bytes)", path, len(text))
    return path


def read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as ex:
        raise DataError(f"cannot read {path}: {ex.strerror}") from ex


def array_to_line(array: FloatArray) -> str:
    """All entries of an array in row-major order on one line."""
    return " ".join(format_value(v) for v in np.ravel(array))


def line_to_array(line: str, shape: tuple[int, ...], lineno: int) -> FloatArray:
    try:
        values = [float(token) for token in line.split()]
    except ValueError as ex:
        raise DataError(f"line {lineno}: {ex}") from ex
    expected = int(np.prod(shape))
    if len(values) != expected:
        raise DataError(f"line {lineno}: expected {expected} values, got {len(values)}")
    return np.array(values, dtype=np.float64).reshape(shape)
