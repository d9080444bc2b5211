"""Peak picking on correlation responses and period statistics.

Each interval between successive peaks is one period ``dt`` (us); it yields a
frequency ``1e6 / dt`` Hz or ``1e6 / dt * 60`` RPM. Per-second tables average
those values and report the standard error ``sqrt(s2 / M)``, where ``s2`` is
the unbiased sample variance of the ``M`` values in that second.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .correlation import CorrelationResponse
from .errors import ConfigError, InsufficientPeaksError
from .frames import FrameSequence

US_PER_S = 1_000_000
UNITS = ("hz", "rpm")


@dataclass(frozen=True)
class PeakConfig:
    """Peak acceptance rules.

    ``min_prominence`` is relative to the score range (max - min) of the whole
    response after flooring it at its median. ``min_separation_us`` defaults to the aggregation duration.
    """

    min_prominence: float = 0.3
    min_separation_us: int | None = None

    def __post_init__(self):
        if not 0 < self.min_prominence <= 1:
            raise ConfigError(f"min-prominence: must be in (0, 1], got {self.min_prominence}")
        if self.min_separation_us is not None and self.min_separation_us < 0:
            raise ConfigError(
                f"min-separation-us: must be non-negative, got {self.min_separation_us}"
            )

    def separation_for(self, duration_us: int) -> int:
        if self.min_separation_us is None:
            return duration_us
        if self.min_separation_us < duration_us:
            raise ConfigError(
                f"min-separation-us: {self.min_separation_us} is shorter than the "
                f"aggregation duration {duration_us}"
            )
        return self.min_separation_us


@dataclass(frozen=True)
class PeakSeries:
    indices: np.ndarray
    peak_times: np.ndarray
    origin_us: int = 0

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.peak_times)

    def __len__(self):
        return len(self.peak_times)


# -- prominence --------------------------------------------------------------


def _nearest_greater(values: list, reverse: bool = False) -> np.ndarray:
    """Index of the nearest strictly greater element on one side (-1 / n if none)."""
    n = len(values)
    out = np.empty(n, dtype=np.int64)
    stack: list[int] = []
    order = range(n - 1, -1, -1) if reverse else range(n)
    missing = n if reverse else -1
    for i in order:
        v = values[i]
        while stack and values[stack[-1]] <= v:
            stack.pop()
        out[i] = stack[-1] if stack else missing
        stack.append(i)
    return out


class _RangeMin:
    """Sparse table for O(1) inclusive range-minimum queries."""

    def __init__(self, x: np.ndarray):
        self.levels = [np.asarray(x, dtype=np.float64)]
        width = 1
        while 2 * width <= len(x):
            prev = self.levels[-1]
            self.levels.append(np.minimum(prev[:-width], prev[width:]))
            width *= 2

    def query(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        length = hi - lo + 1
        level = np.floor(np.log2(length)).astype(np.int64)
        out = np.empty(len(lo), dtype=np.float64)
        for j in np.unique(level):
            sel = level == j
            table = self.levels[j]
            out[sel] = np.minimum(table[lo[sel]], table[hi[sel] - (1 << int(j)) + 1])
        return out


def peak_prominences(x: np.ndarray, peaks: np.ndarray) -> np.ndarray:
    """Topographic prominence of ``x[peaks]``.

    The base on each side is the lowest point between the peak and the
    nearest strictly higher sample (or the series end); prominence is the
    height above the higher of the two bases.
    """
    x = np.asarray(x, dtype=np.float64)
    peaks = np.asarray(peaks, dtype=np.int64)
    if len(peaks) == 0:
        return np.zeros(0)
    values = x.tolist()
    left = _nearest_greater(values)[peaks] + 1
    right = _nearest_greater(values, reverse=True)[peaks] - 1
    rmq = _RangeMin(x)
    left_base = rmq.query(left, peaks)
    right_base = rmq.query(peaks, right)
    return x[peaks] - np.maximum(left_base, right_base)


def strict_local_maxima(x: np.ndarray) -> np.ndarray:
    """Indices ``k`` with ``x[k-1] < x[k] > x[k+1]``; flat tops are not maxima."""
    x = np.asarray(x)
    if len(x) < 3:
        return np.zeros(0, dtype=np.int64)
    inner = (x[1:-1] > x[:-2]) & (x[1:-1] > x[2:])
    return np.flatnonzero(inner) + 1


# -- detection -------------------------------------------------------------


def baseline(scores: np.ndarray) -> float:
    """Floor level for peak measurements: the lower of median and mid-range.

    Troughs below the typical level (anti-correlation) must not lend
    prominence to small bumps between them. The median alone fails on a
    two-level response (alternating +1/-1), where it can land on the upper
    level; the mid-range covers that case. Both move with any positive affine
    rescaling of the scores, so peak selection is invariant under it.
    """
    scores = np.asarray(scores, dtype=np.float64)
    return float(min(np.median(scores), 0.5 * (scores.max() + scores.min())))


def detect_peaks(resp: CorrelationResponse, seq: FrameSequence, cfg: PeakConfig | None = None,
                 refine: bool = False) -> PeakSeries:
    """Find the periodic peaks of a correlation response.

    A peak is a strict local maximum whose prominence is at least
    ``cfg.min_prominence`` times the score range (max - min). Both are
    measured on the response floored at :func:`baseline`, so anti-correlation
    troughs count neither towards prominence nor towards the range. Peaks closer than
    ``min_separation_us`` to the previously kept peak are discarded, scanning
    left to right. Peak times are frame start times; with ``refine`` a
    parabola through the three samples around each peak shifts that time by a
    fraction of a frame.

    Raises
    ------
    InsufficientPeaksError
        Fewer than two peaks survive.
    """
    cfg = cfg or PeakConfig()
    scores = np.asarray(resp.scores, dtype=np.float64)
    if len(scores) != len(seq):
        raise ConfigError(
            f"scores: response length {len(scores)} does not match {len(seq)} frames"
        )
    separation = cfg.separation_for(seq.duration_us)
    if len(scores) < 3:
        raise InsufficientPeaksError(
            f"fewer than 2 peaks: only {len(scores)} frames; shorten the aggregation "
            "duration or record longer"
        )

    candidates = strict_local_maxima(scores)
    floored = np.maximum(scores, baseline(scores))
    span = float(floored.max() - floored.min())
    if len(candidates) and span > 0:
        prom = peak_prominences(floored, candidates)
        candidates = candidates[prom >= cfg.min_prominence * span]
    else:
        candidates = candidates[:0]

    t_starts = seq.t_starts
    kept = []
    last_t = None
    for k in candidates.tolist():
        if last_t is None or t_starts[k] - last_t >= separation:
            kept.append(k)
            last_t = t_starts[k]
    if len(kept) < 2:
        raise InsufficientPeaksError(
            f"fewer than 2 peaks ({len(kept)} found in {len(scores)} frames); the "
            "aggregation duration may exceed half a period or the RoI may lack a "
            "repeating pattern"
        )

    indices = np.array(kept, dtype=np.int64)
    times = t_starts[indices]
    if refine:
        left, mid, right = scores[indices - 1], scores[indices], scores[indices + 1]
        curvature = left - 2 * mid + right
        offset = np.divide(0.5 * (left - right), curvature,
                           out=np.zeros(len(indices)), where=curvature != 0)
        times = times + offset * seq.duration_us
    return PeakSeries(indices, times, seq.t0)


# -- unit conversion -----------------------------------------------------------


def _check_delta(delta_us):
    if not delta_us > 0:
        raise ValueError(f"delta must be positive, got {delta_us}")


def hz_from_delta(delta_us) -> float:
    _check_delta(delta_us)
    return 1e6 / delta_us


def rpm_from_delta(delta_us) -> float:
    _check_delta(delta_us)
    return 1e6 / delta_us * 60


# -- statistics ------------------------------------------------------------


@dataclass(frozen=True)
class IntervalStats:
    """Mean and standard error over the deltas of one interval.

    ``t_bucket`` is the second index for per-second rows and ``None`` for the
    whole-recording row. ``sigma`` is in the report unit and ``None`` when
    ``M < 2``.
    """

    t_bucket: int | None
    M: int
    mean_hz: float
    mean_rpm: float
    sigma: float | None
    unit: str = "hz"

    @property
    def mean(self) -> float:
        return self.mean_rpm if self.unit == "rpm" else self.mean_hz

    @property
    def two_sigma(self) -> float | None:
        return None if self.sigma is None else 2 * self.sigma

    def to_dict(self) -> dict:
        return {
            "t_bucket": self.t_bucket,
            "M": self.M,
            "mean": self.mean,
            "sigma": self.sigma,
            "two_sigma": self.two_sigma,
            "mean_hz": self.mean_hz,
            "mean_rpm": self.mean_rpm,
        }

    def formatted(self, digits: int = 2) -> str:
        """``mean ± 2σ`` as in a results table."""
        if self.two_sigma is None:
            return f"{self.mean:.{digits}f} ± n/a"
        return f"{self.mean:.{digits}f} ± {self.two_sigma:.{digits}f}"


def _interval_stats(bucket, deltas, unit) -> IntervalStats:
    hz = [hz_from_delta(d) for d in deltas]
    rpm = [rpm_from_delta(d) for d in deltas]
    m = len(deltas)
    values = rpm if unit == "rpm" else hz
    sigma = None
    if m >= 2:
        mean = math.fsum(values) / m
        var = math.fsum((v - mean) ** 2 for v in values) / (m - 1)
        sigma = math.sqrt(var / m)
    return IntervalStats(bucket, m, math.fsum(hz) / m, math.fsum(rpm) / m, sigma, unit)


@dataclass(frozen=True)
class EstimateReport:
    unit: str
    peak_times: list
    deltas: list
    overall: IntervalStats
    seconds: list = field(default_factory=list)
    origin_us: int = 0

    @property
    def n_peaks(self) -> int:
        return len(self.peak_times)

    @property
    def mean_hz(self) -> float:
        return self.overall.mean_hz

    @property
    def mean_rpm(self) -> float:
        return self.overall.mean_rpm

    def to_dict(self) -> dict:
        return {
            "schema": "evperiod.report/1",
            "unit": self.unit,
            "origin_us": self.origin_us,
            "N": self.n_peaks,
            "peak_times_us": self.peak_times,
            "deltas_us": self.deltas,
            "overall": self.overall.to_dict(),
            "seconds": [s.to_dict() for s in self.seconds],
        }

    def to_json(self, extra: dict | None = None) -> str:
        doc = self.to_dict()
        if extra:
            doc.update(extra)
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        unit = self.unit.upper() if self.unit == "rpm" else "Hz"
        lines = [f"t_s,M,mean_{self.unit},two_sigma_{self.unit},table ({unit} ± 2σ)"]
        for s in self.seconds:
            two = "" if s.two_sigma is None else repr(s.two_sigma)
            lines.append(
                f"[{s.t_bucket};{s.t_bucket + 1}),{s.M},{s.mean!r},{two},{s.formatted()}"
            )
        o = self.overall
        last = self.seconds[-1].t_bucket + 1 if self.seconds else 0
        first = self.seconds[0].t_bucket if self.seconds else 0
        two = "" if o.two_sigma is None else repr(o.two_sigma)
        lines.append(f"all [{first};{last}),{o.M},{o.mean!r},{two},{o.formatted()}")
        return "\n".join(lines) + "\n"


def summarize(peaks: PeakSeries, unit: str = "hz") -> EstimateReport:
    """Per-second and whole-recording statistics of the peak intervals.

    A delta belongs to the second (counted from ``peaks.origin_us``) that
    contains its left peak; seconds without deltas are omitted.
    """
    if unit not in UNITS:
        raise ConfigError(f"unit: must be hz or rpm, got {unit!r}")
    if len(peaks) < 2:
        raise InsufficientPeaksError(f"fewer than 2 peaks ({len(peaks)})")
    times = np.asarray(peaks.peak_times)
    deltas = np.diff(times)
    if np.any(deltas <= 0):
        raise ValueError("peak times must be strictly increasing")
    buckets = ((times[:-1] - peaks.origin_us) // US_PER_S).astype(np.int64)

    delta_list = deltas.tolist()
    seconds = []
    for b in np.unique(buckets).tolist():
        sel = [d for d, bb in zip(delta_list, buckets.tolist()) if bb == b]
        seconds.append(_interval_stats(b, sel, unit))
    overall = _interval_stats(None, delta_list, unit)
    return EstimateReport(unit, times.tolist(), delta_list, overall, seconds, int(peaks.origin_us))
