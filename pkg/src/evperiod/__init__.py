"""Frequency and rotational-speed estimation from event-camera streams.

Events inside a square region of interest are binned into fixed-duration
frames, one frame is correlated against all others, and the spacing of the
correlation peaks gives the period of the observed phenomenon.
"""

from .correlation import CorrelationResponse, correlate
from .errors import ConfigError, FormatError, InsufficientPeaksError, PeriodError
from .estimation import (
    EstimateReport,
    IntervalStats,
    PeakConfig,
    PeakSeries,
    detect_peaks,
    hz_from_delta,
    rpm_from_delta,
    summarize,
)
from .events import (
    Event,
    EventStream,
    RegionOfInterest,
    SensorGeometry,
    StreamCheck,
    roi_contains,
    validate_stream,
)
from .frames import AggregationFrame, FrameSequence, Template, build_frames, select_template
from .ingest import read_stream, save_stream, write_stream
from .pipeline import PipelineResult, estimate
from .synth import SceneSpec, generate, ground_truth_period_us

__version__ = "0.1.0"

__all__ = [
    "AggregationFrame",
    "ConfigError",
    "CorrelationResponse",
    "EstimateReport",
    "Event",
    "EventStream",
    "FormatError",
    "FrameSequence",
    "InsufficientPeaksError",
    "IntervalStats",
    "PeakConfig",
    "PeakSeries",
    "PeriodError",
    "PipelineResult",
    "RegionOfInterest",
    "SceneSpec",
    "SensorGeometry",
    "StreamCheck",
    "Template",
    "build_frames",
    "correlate",
    "detect_peaks",
    "estimate",
    "generate",
    "ground_truth_period_us",
    "hz_from_delta",
    "read_stream",
    "roi_contains",
    "rpm_from_delta",
    "save_stream",
    "select_template",
    "summarize",
    "validate_stream",
    "write_stream",
]
