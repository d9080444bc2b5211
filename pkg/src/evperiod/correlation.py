"""Template-vs-frame correlation responses.

Two backends compute the same quantities:

* ``direct``: spatial-domain sums of products. Max-over-shifts evaluates
  every cyclic displacement explicitly through a sliding-window view of the
  wrapped frame.
* ``transform``: products of 2D real FFTs (cyclic correlation).

For integer-valued frames the direct backend is exact; the transform backend
agrees to within floating rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError
from .frames import FrameSequence, Template

ZERO_SHIFT = "zero_shift"
MAX_OVER_SHIFTS = "max_over_shifts"
RAW = "raw"
NORMALIZED = "normalized"

MODES = (ZERO_SHIFT, MAX_OVER_SHIFTS)
NORMALIZATIONS = (RAW, NORMALIZED)
BACKENDS = ("direct", "transform")

# frames converted to float64 per batch; bounds peak memory on long recordings
CHUNK_CELLS = 1 << 22


@dataclass(frozen=True)
class CorrelationResponse:
    scores: np.ndarray
    mode: str = ZERO_SHIFT
    normalization: str = NORMALIZED
    t_starts: np.ndarray | None = field(default=None, compare=False)

    def __len__(self):
        return len(self.scores)

    def to_csv(self) -> str:
        lines = ["index,t_start_us,score"]
        t = self.t_starts if self.t_starts is not None else np.zeros(len(self), np.int64)
        for k, (ts, s) in enumerate(zip(t.tolist(), self.scores.tolist())):
            lines.append(f"{k},{ts},{s!r}")
        return "\n".join(lines) + "\n"


def _chunks(frames: np.ndarray):
    n, cells = frames.shape[0], frames.shape[1] * frames.shape[2]
    step = max(1, CHUNK_CELLS // max(cells, 1))
    for lo in range(0, n, step):
        yield lo, frames[lo : lo + step].astype(np.float64)


def direct_scores(template: np.ndarray, frames: np.ndarray, mode: str = ZERO_SHIFT) -> np.ndarray:
    """Raw (unnormalized) scores by explicit spatial summation."""
    tpl = np.asarray(template, dtype=np.float64)
    n, side = frames.shape[0], frames.shape[1]
    out = np.empty(n, dtype=np.float64)
    if mode == ZERO_SHIFT:
        for lo, chunk in _chunks(frames):
            out[lo : lo + len(chunk)] = np.einsum("kij,ij->k", chunk, tpl)
        return out
    for k in range(n):
        f = frames[k].astype(np.float64)
        # windows[a, b] == f rolled so that element (i, j) is f[(i+a)%n, (j+b)%n]
        wrapped = np.pad(f, ((0, side - 1), (0, side - 1)), mode="wrap")
        windows = sliding_window_view(wrapped, (side, side))
        out[k] = np.einsum("ij,abij->ab", tpl, windows).max()
    return out


def transform_scores(template: np.ndarray, frames: np.ndarray, mode: str = ZERO_SHIFT) -> np.ndarray:
    """Raw scores through frequency-domain products."""
    tpl = np.asarray(template, dtype=np.float64)
    n, side = frames.shape[0], frames.shape[1]
    tpl_hat = np.conj(np.fft.rfft2(tpl))
    out = np.empty(n, dtype=np.float64)
    if mode == ZERO_SHIFT:
        # Parseval over the half spectrum: interior rfft columns stand for
        # two conjugate bins of the full spectrum
        weights = np.full(side // 2 + 1, 2.0)
        weights[0] = 1.0
        if side % 2 == 0:
            weights[-1] = 1.0
        for lo, chunk in _chunks(frames):
            prod = np.fft.rfft2(chunk) * tpl_hat
            out[lo : lo + len(chunk)] = (prod.real * weights).sum(axis=(1, 2)) / (side * side)
        return out
    for lo, chunk in _chunks(frames):
        spectrum = np.fft.rfft2(chunk) * tpl_hat
        maps = np.fft.irfft2(spectrum, s=(side, side))
        out[lo : lo + len(chunk)] = maps.reshape(len(chunk), -1).max(axis=1)
    return out


def _frame_norms(frames: np.ndarray) -> np.ndarray:
    norms = np.empty(frames.shape[0], dtype=np.float64)
    for lo, chunk in _chunks(frames):
        norms[lo : lo + len(chunk)] = np.sqrt(np.einsum("kij,kij->k", chunk, chunk))
    return norms


def _cells_of(obj) -> np.ndarray:
    if isinstance(obj, Template):
        return obj.cells
    return np.asarray(getattr(obj, "cells", obj))


def correlate(template, seq, mode: str = ZERO_SHIFT, normalization: str = NORMALIZED,
              backend: str = "direct") -> CorrelationResponse:
    """Correlate ``template`` with every frame of ``seq``.

    Parameters
    ----------
    template : Template, AggregationFrame or array (side, side)
    seq : FrameSequence or array (n_frames, side, side)
    mode : {"zero_shift", "max_over_shifts"}
    normalization : {"raw", "normalized"}
        Normalized scores divide by the product of the L2 norms (cosine
        similarity); an all-zero template or frame scores 0.
    backend : {"direct", "transform"}
    """
    if mode not in MODES:
        raise ConfigError(f"corr-mode: unknown mode {mode!r}")
    if normalization not in NORMALIZATIONS:
        raise ConfigError(f"corr-norm: unknown normalization {normalization!r}")
    if backend not in BACKENDS:
        raise ConfigError(f"backend: unknown backend {backend!r}")
    tpl = _cells_of(template)
    frames = _cells_of(seq)
    if frames.ndim == 2:
        frames = frames[None]
    if tpl.ndim != 2 or tpl.shape[0] != tpl.shape[1]:
        raise ConfigError(f"template: expected a square 2D array, got shape {tpl.shape}")
    if frames.shape[1:] != tpl.shape:
        raise ConfigError(
            f"template: side {tpl.shape[0]} does not match frame side {frames.shape[1]}"
        )

    if backend == "direct":
        scores = direct_scores(tpl, frames, mode)
    else:
        scores = transform_scores(tpl, frames, mode)

    if normalization == NORMALIZED:
        denom = _frame_norms(frames) * float(np.sqrt(np.sum(tpl.astype(np.float64) ** 2)))
        scores = np.divide(scores, denom, out=np.zeros_like(scores), where=denom > 0)
        np.clip(scores, -1.0, 1.0, out=scores)
    t_starts = seq.t_starts if isinstance(seq, FrameSequence) else None
    return CorrelationResponse(scores, mode, normalization, t_starts)
