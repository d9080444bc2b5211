"""Reading and writing event streams.

Text format::

    ee3p-csv v1 <width> <height>
    x,y,t,p
    ...

Binary format (little-endian)::

    offset  size  field
    0       4     magic b"EE3P"
    4       1     version (1)
    5       2     width  (u16)
    7       2     height (u16)
    9       8     event count (u64)
    17      15*N  records: x u16, y u16, t u64, p i8, reserved u16 (always 0)

Records are numbered from 1 in error messages, for both formats.
"""

from __future__ import annotations

import io
import os
import re
import struct
import warnings
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from .errors import FormatError
from .events import EventStream, SensorGeometry

TEXT_MAGIC = b"ee3p-csv"
BINARY_MAGIC = b"EE3P"
BINARY_VERSION = 1

HEADER = struct.Struct("<4sBHHQ")
HEADER_SIZE = HEADER.size  # 17
RECORD_DTYPE = np.dtype(
    [("x", "<u2"), ("y", "<u2"), ("t", "<u8"), ("p", "i1"), ("reserved", "<u2")]
)
RECORD_SIZE = RECORD_DTYPE.itemsize  # 15
U16_MAX = 0xFFFF

_TEXT_HEADER = re.compile(rb"^ee3p-csv v(\d+) (\d+) (\d+)\r?$")

Source = Union[str, os.PathLike, bytes, bytearray, memoryview, BinaryIO]


def _read_bytes(source: Source) -> bytes:
    if isinstance(source, (bytes, bytearray, memoryview)):
        return bytes(source)
    if isinstance(source, (str, os.PathLike)):
        return Path(source).read_bytes()
    return source.read()


def detect_format(data: bytes) -> str:
    if data[:4] == BINARY_MAGIC:
        return "binary"
    if data[: len(TEXT_MAGIC)] == TEXT_MAGIC:
        return "text"
    raise FormatError("unrecognized event file: expected 'EE3P' magic or 'ee3p-csv' header")


def read_stream(source: Source, format: str = "auto") -> EventStream:
    """Decode an event file.

    ``source`` may be a path, a bytes-like object or a readable binary file.
    The returned stream always passes :func:`~evperiod.events.validate_stream`;
    anything else raises :class:`~evperiod.errors.FormatError`.
    """
    data = _read_bytes(source)
    if format == "auto":
        format = detect_format(data)
    if format == "text":
        return _parse_text(data)
    if format == "binary":
        return _parse_binary(data)
    raise FormatError(f"format: unknown event format {format!r}")


def write_stream(stream: EventStream, format: str = "binary") -> bytes:
    if format == "text":
        return _encode_text(stream)
    if format == "binary":
        return _encode_binary(stream)
    raise FormatError(f"format: unknown event format {format!r}")


def save_stream(stream: EventStream, path, format: str = "binary") -> None:
    Path(path).write_bytes(write_stream(stream, format))


def format_for_path(path, default: str = "binary") -> str:
    suffix = Path(path).suffix.lower()
    if suffix in (".csv", ".txt"):
        return "text"
    if suffix in (".bin", ".ee3p"):
        return "binary"
    return default


def _check_columns(geometry: SensorGeometry, x, y, t, p) -> None:
    """Raise on the first invalid record (1-based)."""
    n = len(t)
    if n == 0:
        return
    checks = [
        ((p != 1) & (p != -1), lambda i: f"polarity {int(p[i])} not in {{-1, 1}}"),
        ((x < 0) | (y < 0), lambda i: f"negative coordinate ({int(x[i])},{int(y[i])})"),
        (
            (x >= geometry.width) | (y >= geometry.height),
            lambda i: f"coordinate ({int(x[i])},{int(y[i])}) outside "
            f"{geometry.width}x{geometry.height} sensor",
        ),
        (t < 0, lambda i: f"negative timestamp {int(t[i])}"),
    ]
    decreased = np.zeros(n, dtype=bool)
    decreased[1:] = t[1:] < t[:-1]
    checks.append(
        (decreased, lambda i: f"timestamp decreased ({int(t[i - 1])} -> {int(t[i])})")
    )
    first, describe = n, None
    for bad, why in checks:
        hits = np.flatnonzero(bad[:first])
        if hits.size:
            first, describe = int(hits[0]), why
    if describe is not None:
        raise FormatError(f"record {first + 1}: {describe(first)}")


# -- text ------------------------------------------------------------------


def _parse_text(data: bytes) -> EventStream:
    head, sep, body = data.partition(b"\n")
    m = _TEXT_HEADER.match(head)
    if m is None:
        raise FormatError(f"malformed header {head[:64]!r}; expected 'ee3p-csv v1 <width> <height>'")
    version, width, height = (int(g) for g in m.groups())
    if version != 1:
        raise FormatError(f"unsupported text format version v{version}")
    if width <= 0 or height <= 0:
        raise FormatError(f"malformed header: geometry {width}x{height} must be positive")
    geometry = SensorGeometry(width, height)

    if body.endswith(b"\n"):
        body = body[:-1]
    if not body:
        return EventStream(geometry)

    cols = _parse_text_fast(body)
    if cols is None:
        cols = _parse_text_slow(body)
    x, y, t, p = cols
    _check_columns(geometry, x, y, t, p)
    return EventStream(geometry, x, y, t, p)


def _parse_text_fast(body: bytes):
    """Vectorized parse; returns None when the slow path must locate an error."""
    raw = np.frombuffer(body, dtype=np.uint8)
    newlines = np.flatnonzero(raw == ord("\n"))
    n_lines = len(newlines) + 1
    commas = np.flatnonzero(raw == ord(","))
    per_line = np.bincount(np.searchsorted(newlines, commas), minlength=n_lines)
    if len(per_line) != n_lines or np.any(per_line != 3):
        return None
    flat = body.replace(b"\n", b",").decode("ascii", errors="replace")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            values = np.fromstring(flat, dtype=np.int64, sep=",")
        except ValueError:
            return None
    if len(values) != 4 * n_lines:
        return None
    # fromstring accepts things int() would reject (e.g. "1.5", "+ 1");
    # restrict the alphabet to digits, sign, comma, newline and CR.
    allowed = np.zeros(256, dtype=bool)
    allowed[list(b"0123456789-,\n\r")] = True
    if not allowed[raw].all():
        return None
    minus = np.flatnonzero(raw == ord("-"))
    if minus.size:
        prev = raw[minus[minus > 0] - 1]
        if not np.isin(prev, (ord(","), ord("\n"))).all():
            return None
    values = values.reshape(n_lines, 4)
    return values[:, 0], values[:, 1], values[:, 2], values[:, 3]


def _parse_text_slow(body: bytes):
    rows = []
    for i, line in enumerate(body.split(b"\n"), start=1):
        fields = line.rstrip(b"\r").split(b",")
        if len(fields) != 4:
            raise FormatError(f"record {i}: expected 4 comma-separated fields, got {len(fields)}")
        try:
            row = [int(f.decode("ascii")) for f in fields]
        except (ValueError, UnicodeDecodeError):
            raise FormatError(f"record {i}: non-integer field in {line[:64]!r}") from None
        if not all(-(2**63) <= v < 2**63 for v in row):
            raise FormatError(f"record {i}: value out of range in {line[:64]!r}")
        rows.append(row)
    values = np.array(rows, dtype=np.int64).reshape(-1, 4)
    return values[:, 0], values[:, 1], values[:, 2], values[:, 3]


def _encode_text(stream: EventStream) -> bytes:
    g = stream.geometry
    buf = io.StringIO()
    buf.write(f"ee3p-csv v1 {g.width} {g.height}\n")
    for x, y, t, p in zip(
        stream.x.tolist(), stream.y.tolist(), stream.t.tolist(), stream.p.tolist()
    ):
        buf.write(f"{x},{y},{t},{p}\n")
    return buf.getvalue().encode("ascii")


# -- binary ----------------------------------------------------------------


def _parse_binary(data: bytes) -> EventStream:
    if len(data) < HEADER_SIZE:
        raise FormatError(f"truncated binary header: {len(data)} of {HEADER_SIZE} bytes")
    magic, version, width, height, count = HEADER.unpack_from(data)
    if magic != BINARY_MAGIC:
        raise FormatError(f"malformed header: bad magic {magic!r}")
    if version != BINARY_VERSION:
        raise FormatError(f"unsupported binary format version {version}")
    if width == 0 or height == 0:
        raise FormatError(f"malformed header: geometry {width}x{height} must be positive")
    expected = HEADER_SIZE + RECORD_SIZE * count
    if len(data) < expected:
        raise FormatError(
            f"truncated binary payload: header declares {count} events "
            f"({expected} bytes), file has {len(data)} bytes"
        )
    if len(data) > expected:
        raise FormatError(
            f"trailing bytes after {count} records: expected {expected} bytes, got {len(data)}"
        )
    rec = np.frombuffer(data, dtype=RECORD_DTYPE, count=count, offset=HEADER_SIZE)
    nonzero = np.flatnonzero(rec["reserved"])
    if nonzero.size:
        raise FormatError(f"record {nonzero[0] + 1}: reserved field is not zero")
    t = rec["t"]
    if count and int(t.max()) >= 2**63:
        i = int(np.argmax(t >= 2**63))
        raise FormatError(f"record {i + 1}: timestamp exceeds signed 64-bit range")
    geometry = SensorGeometry(width, height)
    x, y, p = rec["x"], rec["y"], rec["p"]
    t = t.astype(np.int64)
    _check_columns(geometry, x, y, t, p)
    return EventStream(geometry, x, y, t, p)


def _encode_binary(stream: EventStream) -> bytes:
    g = stream.geometry
    if g.width > U16_MAX or g.height > U16_MAX:
        raise FormatError(
            f"geometry {g.width}x{g.height} exceeds the binary format's u16 range"
        )
    n = len(stream)
    if n and int(stream.t.min()) < 0:
        raise FormatError("negative timestamps cannot be stored in the binary format")
    rec = np.zeros(n, dtype=RECORD_DTYPE)
    rec["x"] = stream.x
    rec["y"] = stream.y
    rec["t"] = stream.t
    rec["p"] = stream.p
    header = HEADER.pack(BINARY_MAGIC, BINARY_VERSION, g.width, g.height, n)
    return header + rec.tobytes()
