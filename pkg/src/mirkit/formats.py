"""On-disk formats: F32M matrices, matrix/score CSV and binary PGM images."""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputParseError, PreconditionError

MATRIX_MAGIC = b"F32M"


def encode_matrix(matrix) -> bytes:
    m = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if m.ndim != 2:
        raise PreconditionError(f"expected a 2-D matrix, got shape {m.shape}")
    rows, cols = m.shape
    return MATRIX_MAGIC + struct.pack("<II", rows, cols) + m.astype("<f4").tobytes(order="C")


def decode_matrix(raw: bytes, source="<bytes>") -> np.ndarray:
    if len(raw) < 12 or raw[:4] != MATRIX_MAGIC:
        raise InputParseError(f"{source}: not an F32M matrix file")
    rows, cols = struct.unpack("<II", raw[4:12])
    expected = 12 + 4 * rows * cols
    if len(raw) != expected:
        raise InputParseError(f"{source}: payload is {len(raw)} bytes, header implies {expected}")
    return np.frombuffer(raw, dtype="<f4", offset=12).reshape(rows, cols).astype(np.float32)


def write_matrix_binary(matrix, path) -> None:
    Path(path).write_bytes(encode_matrix(matrix))


def read_matrix_binary(path) -> np.ndarray:
    return decode_matrix(Path(path).read_bytes(), path)


def format_float(value: float) -> str:
    """Nine significant digits, enough to round-trip any float32."""
    return f"{float(value):.9g}"


def write_matrix_csv(matrix, path) -> None:
    m = np.atleast_2d(np.asarray(matrix, dtype=np.float32))
    lines = [",".join(format_float(v) for v in row) for row in m]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError as exc:
            raise InputParseError(f"{path}:{lineno}: {exc}") from exc
    if len({len(r) for r in rows}) > 1:
        raise InputParseError(f"{path}: ragged rows")
    return np.array(rows, dtype=np.float32)


def read_matrix(path) -> np.ndarray:
    """Read F32M or CSV, chosen by the file's magic bytes."""
    raw = Path(path).read_bytes()
    if raw[:4] == MATRIX_MAGIC:
        return decode_matrix(raw, path)
    return read_matrix_csv(path)


@dataclass
class ScoreTable:
    """Rows of ``id,<class_1>,...,<class_C>``."""

    ids: list
    classes: list
    values: np.ndarray  # (items, classes)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=np.float64)).reshape(len(self.ids), len(self.classes))
        if len(set(self.ids)) != len(self.ids):
            dupes = sorted({i for i in self.ids if self.ids.count(i) > 1})
            raise InputParseError(f"duplicate ids: {dupes[:5]}")


def parse_score_csv(text: str, source="<text>") -> ScoreTable:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise InputParseError(f"{source}: empty file") from None
    if not header or header[0].strip() != "id" or len(header) < 2:
        raise InputParseError(f"{source}: header must be 'id,<class_1>,...'")
    classes = [h.strip() for h in header[1:]]
    ids, values = [], []
    for lineno, row in enumerate(reader, 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise InputParseError(f"{source}:{lineno}: expected {len(header)} columns, got {len(row)}")
        try:
            values.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise InputParseError(f"{source}:{lineno}: {exc}") from exc
        ids.append(row[0].strip())
    return ScoreTable(ids, classes, np.array(values, dtype=np.float64).reshape(len(ids), len(classes)))


def read_score_csv(path) -> ScoreTable:
    return parse_score_csv(Path(path).read_text(), path)


def format_score_csv(table: ScoreTable) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["id", *table.classes])
    for item, row in zip(table.ids, table.values):
        writer.writerow([item, *(format_float(v) for v in row)])
    return out.getvalue()


def write_score_csv(table: ScoreTable, path) -> None:
    Path(path).write_text(format_score_csv(table))


def db_to_pgm(db, dynamic_range: float = 80.0) -> bytes:
    """Render a dB matrix as a binary 8-bit PGM.

    Values are clamped to ``[max - dynamic_range, max]`` and mapped linearly
    to 0..255. Row 0 (lowest frequency) ends up at the bottom of the image.
    A constant matrix renders as all zeros.
    """
    m = np.atleast_2d(np.asarray(db, dtype=np.float64))
    top = m.max()
    floor = top - dynamic_range
    clipped = np.clip(m, floor, top)
    if top - clipped.min() <= 0:
        pixels = np.zeros(m.shape, dtype=np.uint8)
    else:
        pixels = np.round((clipped - floor) / dynamic_range * 255.0).astype(np.uint8)
    pixels = np.flipud(pixels)
    rows, cols = pixels.shape
    return f"P5\n{cols} {rows}\n255\n".encode("ascii") + pixels.tobytes()


def read_pgm(raw: bytes) -> np.ndarray:
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5" or len(parts) < 4:
        raise InputParseError("not a binary PGM")
    cols, rows = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(rows, cols)
