"""End-to-end estimation: frames -> template -> correlation -> peaks -> report."""

from __future__ import annotations

from dataclasses import dataclass

from .correlation import NORMALIZED, ZERO_SHIFT, CorrelationResponse, correlate
from .errors import InsufficientPeaksError
from .estimation import EstimateReport, PeakConfig, PeakSeries, detect_peaks, summarize
from .events import EventStream, RegionOfInterest
from .frames import OVERWRITE, FrameSequence, Template, build_frames, select_template


@dataclass
class PipelineResult:
    frames: FrameSequence
    template: Template
    response: CorrelationResponse
    peaks: PeakSeries
    report: EstimateReport


def estimate(
    stream: EventStream,
    roi: RegionOfInterest,
    duration_us: int,
    template="auto",
    mode: str = ZERO_SHIFT,
    normalization: str = NORMALIZED,
    backend: str = "direct",
    peaks: PeakConfig | None = None,
    unit: str = "hz",
    aggregation: str = OVERWRITE,
    refine: bool = False,
) -> PipelineResult:
    peaks = peaks or PeakConfig()
    peaks.separation_for(int(duration_us))
    seq = build_frames(stream, roi, duration_us, mode=aggregation)
    if len(seq) == 0:
        raise InsufficientPeaksError(
            f"fewer than 2 peaks: the recording is shorter than one {duration_us} us frame"
        )
    tpl = select_template(seq, template)
    resp = correlate(tpl, seq, mode=mode, normalization=normalization, backend=backend)
    series = detect_peaks(resp, seq, peaks, refine=refine)
    return PipelineResult(seq, tpl, resp, series, summarize(series, unit))
