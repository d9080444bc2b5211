"""Core event-camera types: events, streams, sensor geometry and RoIs.

Streams are stored column-wise (``x``, ``y``, ``t``, ``p`` numpy arrays) so
that multi-million event recordings can be filtered and binned without a
Python object per event. Single :class:`Event` values are materialized only
on indexing or iteration.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import ConfigError

DEFAULT_WIDTH = 1280
DEFAULT_HEIGHT = 720


@dataclass(frozen=True)
class SensorGeometry:
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT

    def __post_init__(self):
        if int(self.width) <= 0 or int(self.height) <= 0:
            raise ConfigError(
                f"geometry: width and height must be positive, got {self.width}x{self.height}"
            )


@dataclass(frozen=True)
class Event:
    x: int
    y: int
    t: int
    p: int


@dataclass(frozen=True)
class RegionOfInterest:
    """Square window ``[x0, x1) x [y0, y1)`` on the sensor plane."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ConfigError(
                f"roi: bottom-right corner must exceed top-left, got "
                f"({self.x0},{self.y0})-({self.x1},{self.y1})"
            )
        if self.x1 - self.x0 != self.y1 - self.y0:
            raise ConfigError(
                f"roi: region must be square, got {self.x1 - self.x0}x{self.y1 - self.y0}"
            )

    @classmethod
    def centered(cls, cx: float, cy: float, side: int) -> "RegionOfInterest":
        x0 = int(round(cx - side / 2))
        y0 = int(round(cy - side / 2))
        return cls(x0, y0, x0 + side, y0 + side)

    @classmethod
    def parse(cls, text: str) -> "RegionOfInterest":
        """Parse ``"x0,y0,x1,y1"``."""
        parts = [s.strip() for s in str(text).split(",")]
        if len(parts) != 4:
            raise ConfigError(f"roi: expected x0,y0,x1,y1, got {text!r}")
        try:
            x0, y0, x1, y1 = (int(v) for v in parts)
        except ValueError:
            raise ConfigError(f"roi: coordinates must be integers, got {text!r}") from None
        return cls(x0, y0, x1, y1)

    @property
    def side(self) -> int:
        return self.x1 - self.x0

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2)

    def contains(self, e: Event) -> bool:
        return self.x0 <= e.x < self.x1 and self.y0 <= e.y < self.y1

    def mask(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`contains` over coordinate columns."""
        return (x >= self.x0) & (x < self.x1) & (y >= self.y0) & (y < self.y1)

    def check_inside(self, geometry: SensorGeometry) -> None:
        if self.x0 < 0 or self.y0 < 0 or self.x1 > geometry.width or self.y1 > geometry.height:
            raise ConfigError(
                f"roi: ({self.x0},{self.y0})-({self.x1},{self.y1}) lies outside the "
                f"{geometry.width}x{geometry.height} sensor"
            )

    def __str__(self):
        return f"{self.x0},{self.y0},{self.x1},{self.y1}"


def roi_contains(roi: RegionOfInterest, e: Event) -> bool:
    return roi.contains(e)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


class EventStream:
    """Time-ordered events observed by a sensor of known geometry.

    Parameters
    ----------
    geometry : SensorGeometry
    x, y : array_like of int
        Pixel column and row.
    t : array_like of int
        Timestamps in microseconds.
    p : array_like of int
        Polarity, -1 or +1.

    The constructor does not check the invariants; use :func:`validate_stream`.
    Columns are copied into read-only arrays (``int32``, ``int32``, ``int64``,
    ``int8``).
    """

    __slots__ = ("geometry", "x", "y", "t", "p")

    def __init__(self, geometry: SensorGeometry, x=(), y=(), t=(), p=()):
        self.geometry = geometry
        x = np.array(x, dtype=np.int32)
        y = np.array(y, dtype=np.int32)
        t = np.array(t, dtype=np.int64)
        p = np.array(p, dtype=np.int8)
        if not (x.ndim == y.ndim == t.ndim == p.ndim == 1):
            raise ValueError("event columns must be one-dimensional")
        if not (len(x) == len(y) == len(t) == len(p)):
            raise ValueError("event columns must have equal length")
        self.x = _frozen(x)
        self.y = _frozen(y)
        self.t = _frozen(t)
        self.p = _frozen(p)

    @classmethod
    def from_events(cls, geometry: SensorGeometry, events: Iterable[Event]) -> "EventStream":
        events = list(events)
        return cls(
            geometry,
            [e.x for e in events],
            [e.y for e in events],
            [e.t for e in events],
            [e.p for e in events],
        )

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> Event:
        return Event(int(self.x[i]), int(self.y[i]), int(self.t[i]), int(self.p[i]))

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.geometry == other.geometry
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.p, other.p)
        )

    __hash__ = None

    def __repr__(self):
        span = f", t=[{self.t[0]}, {self.t[-1]}]" if len(self) else ""
        return (
            f"EventStream({self.geometry.width}x{self.geometry.height}, "
            f"{len(self)} events{span})"
        )

    def time_slice(self, t_begin: int, t_end: int) -> "EventStream":
        """Events with ``t_begin <= t < t_end``."""
        lo, hi = np.searchsorted(self.t, [t_begin, t_end], side="left")
        return EventStream(
            self.geometry, self.x[lo:hi], self.y[lo:hi], self.t[lo:hi], self.p[lo:hi]
        )


@dataclass(frozen=True)
class StreamCheck:
    """Outcome of :func:`validate_stream`; truthy when the stream is valid."""

    ok: bool
    index: int | None = None
    reason: str | None = None

    def __bool__(self):
        return self.ok


def validate_stream(stream: EventStream) -> StreamCheck:
    """Check polarity domain, coordinate bounds and timestamp ordering.

    Returns the first violating (0-based) index and a reason; violations are
    not raised.
    """
    n = len(stream)
    if n == 0:
        return StreamCheck(True)
    g = stream.geometry
    x, y, t, p = stream.x, stream.y, stream.t, stream.p

    checks = [
        ((p != 1) & (p != -1), "polarity not in {-1, +1}"),
        ((x < 0) | (y < 0), "negative coordinate"),
        ((x >= g.width) | (y >= g.height), "coordinate outside sensor geometry"),
        (t < 0, "negative timestamp"),
    ]
    decreased = np.zeros(n, dtype=bool)
    decreased[1:] = t[1:] < t[:-1]
    checks.append((decreased, "timestamp decreased"))

    first, reason = n, None
    for bad, why in checks:
        hits = np.flatnonzero(bad[:first])
        if hits.size:
            first, reason = int(hits[0]), why
    if reason is None:
        return StreamCheck(True)
    return StreamCheck(False, first, reason)
