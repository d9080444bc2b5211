"""Event aggregation into fixed-duration RoI frames and template selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .events import EventStream, RegionOfInterest

OVERWRITE = "overwrite"
ADDITIVE = "additive"

# cells per block of the last-write buffer in overwrite mode
BLOCK_CELLS = 1 << 22


@dataclass(frozen=True)
class AggregationFrame:
    cells: np.ndarray
    index: int
    t_start: int
    t_end: int

    @property
    def side(self) -> int:
        return self.cells.shape[0]

    @property
    def event_count(self) -> int:
        """Number of nonzero cells."""
        return int(np.count_nonzero(self.cells))


@dataclass(frozen=True)
class Template:
    frame: AggregationFrame
    source_index: int

    @property
    def cells(self) -> np.ndarray:
        return self.frame.cells


class FrameSequence:
    """Contiguous, non-overlapping frames starting at the stream's first timestamp.

    ``cells`` holds all frames as one ``(n_frames, side, side)`` array;
    indexing yields :class:`AggregationFrame` views.
    """

    def __init__(self, roi: RegionOfInterest, duration_us: int, t0: int, cells: np.ndarray,
                 mode: str = OVERWRITE):
        self.roi = roi
        self.duration_us = int(duration_us)
        self.t0 = int(t0)
        self.mode = mode
        cells.flags.writeable = False
        self.cells = cells

    def __len__(self):
        return self.cells.shape[0]

    def __getitem__(self, k) -> AggregationFrame:
        if not -len(self) <= k < len(self):
            raise IndexError(f"frame index {k} out of range for {len(self)} frames")
        k = k % len(self)
        t_start = self.t0 + k * self.duration_us
        return AggregationFrame(self.cells[k], k, t_start, t_start + self.duration_us)

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]

    def __repr__(self):
        return (
            f"FrameSequence(roi={self.roi}, duration_us={self.duration_us}, "
            f"t0={self.t0}, frames={len(self)})"
        )

    @property
    def side(self) -> int:
        return self.roi.side

    @property
    def t_starts(self) -> np.ndarray:
        return self.t0 + self.duration_us * np.arange(len(self), dtype=np.int64)

    def event_counts(self) -> np.ndarray:
        """Nonzero cells per frame."""
        return np.count_nonzero(self.cells.reshape(len(self), -1), axis=1)


def build_frames(stream: EventStream, roi: RegionOfInterest, duration_us: int,
                 mode: str = OVERWRITE) -> FrameSequence:
    """Aggregate the stream into RoI frames of ``duration_us`` microseconds.

    Frame ``k`` covers ``[t0 + k*duration_us, t0 + (k+1)*duration_us)`` where
    ``t0`` is the first timestamp of the whole stream. A frame is kept only if
    the stream extends to its end, so the trailing partial interval is
    dropped.

    In ``overwrite`` mode each cell holds the polarity of the last event that
    hit it in the interval (0 if none). ``additive`` sums polarities instead.
    """
    duration_us = int(duration_us)
    if duration_us < 1:
        raise ConfigError(f"duration_us: must be >= 1, got {duration_us}")
    roi.check_inside(stream.geometry)
    if mode not in (OVERWRITE, ADDITIVE):
        raise ConfigError(f"mode: unknown aggregation mode {mode!r}")

    side = roi.side
    dtype = np.int8 if mode == OVERWRITE else np.int32
    if len(stream) == 0:
        return FrameSequence(roi, duration_us, 0, np.zeros((0, side, side), dtype), mode)

    t = stream.t
    t0 = int(t[0])
    n_frames = (int(t[-1]) - t0) // duration_us
    covered = int(np.searchsorted(t, t0 + n_frames * duration_us, side="left"))
    x, y = stream.x[:covered], stream.y[:covered]
    inside = roi.mask(x, y)
    idx = np.flatnonzero(inside)

    frame = (t[idx] - t0) // duration_us
    cell = (y[idx] - roi.y0).astype(np.int64) * side + (x[idx] - roi.x0)
    lin = frame * (side * side) + cell
    pol = stream.p[idx]

    cells_per_frame = side * side
    if mode == ADDITIVE:
        flat = np.bincount(lin, weights=pol, minlength=n_frames * cells_per_frame)
        flat = flat.astype(np.int32)
    else:
        flat = np.zeros(n_frames * cells_per_frame, dtype=np.int8)
        # frames are handled in blocks so the ordinal buffer stays bounded;
        # lin is sorted by frame because events are time-ordered
        block = max(1, BLOCK_CELLS // cells_per_frame)
        bounds = np.searchsorted(frame, np.arange(0, n_frames + block, block), side="left")
        for b in range(len(bounds) - 1):
            lo, hi = bounds[b], bounds[b + 1]
            if lo == hi:
                continue
            base = b * block * cells_per_frame
            local = lin[lo:hi] - base
            # largest event ordinal per cell == last write; ufunc.at has
            # defined semantics for repeated indices
            last = np.full(block * cells_per_frame, -1, dtype=np.int64)
            np.maximum.at(last, local, np.arange(lo, hi, dtype=np.int64))
            hit = np.flatnonzero(last >= 0)
            flat[base + hit] = pol[last[hit]]
    return FrameSequence(roi, duration_us, t0, flat.reshape(n_frames, side, side), mode)


def select_template(seq: FrameSequence, strategy="max_event_count") -> Template:
    """Pick the template frame.

    ``strategy`` is ``"max_event_count"`` (alias ``"auto"``) or an explicit
    frame index. The event-count rule keeps the lowest index on ties.
    """
    if len(seq) == 0:
        raise ConfigError("template: frame sequence is empty")
    if strategy in ("max_event_count", "auto"):
        k = int(np.argmax(seq.event_counts()))
    else:
        try:
            k = int(strategy)
        except (TypeError, ValueError):
            raise ConfigError(f"template: unknown strategy {strategy!r}") from None
        if not 0 <= k < len(seq):
            raise ConfigError(f"template: index {k} out of range for {len(seq)} frames")
    return Template(seq[k], k)


def frame_to_pgm(cells: np.ndarray) -> bytes:
    """Binary graymap: 0 -> 128, positive -> 255, negative -> 0."""
    cells = np.asarray(cells)
    gray = np.full(cells.shape, 128, dtype=np.uint8)
    gray[cells > 0] = 255
    gray[cells < 0] = 0
    h, w = gray.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + gray.tobytes()
