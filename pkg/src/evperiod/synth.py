"""Synthetic event streams with an exactly known period.

Three scene kinds are supported:

``flash``
    A disc that switches between dark and bright with a given duty cycle.
    Every pixel inside the disc fires positive events on the rising edge and
    negative events on the falling edge.
``vibration``
    A bright membrane whose radius oscillates sinusoidally,
    ``r(t) = radius + amplitude * sin(2 pi f t)``. Pixels in the swept ring
    fire when the edge passes them (positive while growing, negative while
    shrinking).
``rotation``
    A dark disc carrying a bright radial mark that rotates at ``f``
    revolutions per second. The disc may be viewed at a tilt, which squashes
    it into an ellipse along the vertical image axis.

Pixels are point-sampled at their integer centers and the scene is sampled on
a 1 us grid, so an edge crossing at continuous time ``tc`` yields an event at
``ceil(tc)``. Vibration and rotation edges are roughened by a fixed, seeded per-pixel
offset of up to ``edge_roughness`` px, so that neighbouring frames do not
hold identical copies of a perfectly regular edge. The offset does not change
over time, so the stream stays exactly periodic.

Each crossing produces ``floor(ln(contrast) / ln(1 + threshold))``
events at consecutive microseconds.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .events import EventStream, SensorGeometry

KINDS = ("flash", "vibration", "rotation")
MAX_TILT_DEG = 60.0


@dataclass(frozen=True)
class SceneSpec:
    kind: str
    frequency_hz: float
    duration_s: float
    width: int = 1280
    height: int = 720
    seed: int = 0
    center_x: float | None = None
    center_y: float | None = None
    # disc radius (flash, rotation) or rest radius of the membrane (vibration)
    radius: float = 40.0
    duty_cycle: float = 0.5
    amplitude: float = 4.0
    mark_width_rad: float = 0.35
    # radial length of the mark, measured inward from the rim; None = full radius
    mark_extent: float | None = None
    tilt_deg: float = 0.0
    # fraction of a period by which the phenomenon is advanced at t = 0
    phase: float = 0.0
    # fixed per-pixel jitter (px) of the moving edge; models surface texture
    edge_roughness: float = 0.5
    noise_rate: float = 0.0
    contrast: float = 2.0
    contrast_threshold: float = 0.5

    @property
    def geometry(self) -> SensorGeometry:
        return SensorGeometry(self.width, self.height)

    @property
    def cx(self) -> float:
        return self.width / 2 if self.center_x is None else self.center_x

    @property
    def cy(self) -> float:
        return self.height / 2 if self.center_y is None else self.center_y

    @property
    def duration_us(self) -> int:
        return int(round(self.duration_s * 1e6))

    @property
    def events_per_crossing(self) -> int:
        return int(math.log(self.contrast) // math.log1p(self.contrast_threshold))

    def with_(self, **changes) -> "SceneSpec":
        return replace(self, **changes)

    def validate(self) -> None:
        """Raise :class:`ConfigError` naming the first offending field."""

        def fail(field, msg):
            raise ConfigError(f"{field}: {msg}")

        if self.kind not in KINDS:
            fail("kind", f"must be one of {', '.join(KINDS)}, got {self.kind!r}")
        if not self.frequency_hz > 0:
            fail("frequency_hz", f"must be positive, got {self.frequency_hz}")
        if not self.duration_s > 0:
            fail("duration_s", f"must be positive, got {self.duration_s}")
        if self.frequency_hz * self.duration_s < 2:
            fail(
                "duration_s",
                f"{self.duration_s} s covers fewer than two periods at {self.frequency_hz} Hz",
            )
        if self.width <= 0 or self.height <= 0:
            fail("width", f"sensor geometry must be positive, got {self.width}x{self.height}")
        if not self.radius > 0:
            fail("radius", f"must be positive, got {self.radius}")
        if not 0 < self.duty_cycle < 1:
            fail("duty_cycle", f"must be in (0, 1), got {self.duty_cycle}")
        if not 0 <= self.phase < 1:
            fail("phase", f"must be in [0, 1), got {self.phase}")
        if not self.edge_roughness >= 0:
            fail("edge_roughness", f"must be >= 0, got {self.edge_roughness}")
        if not self.noise_rate >= 0:
            fail("noise_rate", f"must be >= 0, got {self.noise_rate}")
        if not self.contrast > 1:
            fail("contrast", f"intensity ratio must exceed 1, got {self.contrast}")
        if not self.contrast_threshold > 0:
            fail("contrast_threshold", f"must be positive, got {self.contrast_threshold}")
        if self.events_per_crossing < 1:
            fail(
                "contrast_threshold",
                f"{self.contrast_threshold} is above the stimulus contrast {self.contrast}; "
                "no events would fire",
            )

        if self.kind == "vibration":
            if not 0 < self.amplitude < self.radius:
                fail("amplitude", f"must be in (0, radius), got {self.amplitude}")
            reach_x = reach_y = self.radius + self.amplitude
        elif self.kind == "rotation":
            if not 0 < self.mark_width_rad < 2 * math.pi:
                fail("mark_width_rad", f"must be in (0, 2 pi), got {self.mark_width_rad}")
            extent = self.radius if self.mark_extent is None else self.mark_extent
            if not 0 < extent <= self.radius:
                fail("mark_extent", f"must be in (0, radius], got {extent}")
            if not 0 <= self.tilt_deg <= MAX_TILT_DEG:
                fail("tilt_deg", f"must be in [0, {MAX_TILT_DEG}], got {self.tilt_deg}")
            reach_x = self.radius
            reach_y = self.radius * math.cos(math.radians(self.tilt_deg))
        else:
            reach_x = reach_y = self.radius

        if (
            self.cx - reach_x < 0
            or self.cy - reach_y < 0
            or self.cx + reach_x > self.width - 1
            or self.cy + reach_y > self.height - 1
        ):
            fail(
                "center_x",
                f"{self.kind} feature at ({self.cx}, {self.cy}) with reach "
                f"({reach_x:g}, {reach_y:g}) px leaves the {self.width}x{self.height} sensor",
            )


def ground_truth_period_us(spec: SceneSpec) -> float:
    return 1e6 / spec.frequency_hz


# -- scene-specific crossing phases ---------------------------------------
#
# Each helper returns pixel coordinates, the crossing phase within one period
# (us, in [0, T)) and the polarity of each crossing.


def _pixel_grid(spec, reach_x, reach_y):
    x0 = max(int(math.floor(spec.cx - reach_x)), 0)
    x1 = min(int(math.ceil(spec.cx + reach_x)), spec.width - 1)
    y0 = max(int(math.floor(spec.cy - reach_y)), 0)
    y1 = min(int(math.ceil(spec.cy + reach_y)), spec.height - 1)
    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    return xs.ravel().astype(np.int32), ys.ravel().astype(np.int32)


def _flash_crossings(spec, period, rough):
    xs, ys = _pixel_grid(spec, spec.radius, spec.radius)
    inside = (xs - spec.cx) ** 2 + (ys - spec.cy) ** 2 <= spec.radius**2
    xs, ys = xs[inside], ys[inside]
    n = len(xs)
    phases = np.concatenate([np.zeros(n), np.full(n, spec.duty_cycle * period)])
    pols = np.concatenate([np.ones(n, np.int8), -np.ones(n, np.int8)])
    return np.tile(xs, 2), np.tile(ys, 2), phases, pols


def _vibration_crossings(spec, period, rough):
    reach = spec.radius + spec.amplitude
    xs, ys = _pixel_grid(spec, reach, reach)
    d = np.hypot(xs - spec.cx, ys - spec.cy) + rough(len(xs))
    swept = np.abs(d - spec.radius) < spec.amplitude
    xs, ys, d = xs[swept], ys[swept], d[swept]
    alpha = np.arcsin((d - spec.radius) / spec.amplitude)
    grow = alpha / (2 * math.pi) * period
    shrink = (math.pi - alpha) / (2 * math.pi) * period
    n = len(xs)
    phases = np.concatenate([grow, shrink])
    pols = np.concatenate([np.ones(n, np.int8), -np.ones(n, np.int8)])
    return np.tile(xs, 2), np.tile(ys, 2), phases, pols


def _rotation_crossings(spec, period, rough):
    squash = math.cos(math.radians(spec.tilt_deg))
    xs, ys = _pixel_grid(spec, spec.radius, spec.radius * squash)
    dx = xs - spec.cx
    dy = (ys - spec.cy) / squash
    rho = np.hypot(dx, dy)
    extent = spec.radius if spec.mark_extent is None else spec.mark_extent
    band = (rho <= spec.radius) & (rho >= spec.radius - extent)
    xs, ys, dx, dy = xs[band], ys[band], dx[band], dy[band]
    # leading edge of the mark sits at angle 2 pi f t at time t
    psi = np.arctan2(dy, dx) + rough(len(xs)) / np.maximum(rho[band], 1.0)
    psi = np.mod(psi, 2 * math.pi)
    enter = psi / (2 * math.pi) * period
    leave = enter + spec.mark_width_rad / (2 * math.pi) * period
    n = len(xs)
    phases = np.concatenate([enter, leave])
    pols = np.concatenate([np.ones(n, np.int8), -np.ones(n, np.int8)])
    return np.tile(xs, 2), np.tile(ys, 2), phases, pols


_CROSSINGS = {
    "flash": _flash_crossings,
    "vibration": _vibration_crossings,
    "rotation": _rotation_crossings,
}


def _tile_periods(xs, ys, phases, pols, period, duration_us, repeat):
    """Replicate one period of crossings over the whole recording, time-sorted."""
    order = np.argsort(phases, kind="stable")
    xs, ys, phases, pols = xs[order], ys[order], phases[order], pols[order]
    # starts one period early: a phase just below T rounds up to T, so the
    # copy from period -1 lands exactly on t = 0
    n_periods = int(math.ceil(duration_us / period)) + 2
    k = np.arange(-1, n_periods - 1, dtype=np.float64)[:, None]
    t = np.ceil(phases[None, :] + k * period).astype(np.int64).ravel()
    keep = (t >= 0) & (t < duration_us)
    t = t[keep]
    x = np.tile(xs, n_periods)[keep]
    y = np.tile(ys, n_periods)[keep]
    p = np.tile(pols, n_periods)[keep]
    if len(t) > 1 and np.any(t[1:] < t[:-1]):
        order = np.argsort(t, kind="stable")
        t, x, y, p = t[order], x[order], y[order], p[order]
    if repeat > 1:
        offsets = np.arange(repeat, dtype=np.int64)
        t = (t[:, None] + offsets).ravel()
        x, y, p = (np.repeat(a, repeat) for a in (x, y, p))
        keep = t < duration_us
        t, x, y, p = t[keep], x[keep], y[keep], p[keep]
        order = np.argsort(t, kind="stable")
        t, x, y, p = t[order], x[order], y[order], p[order]
    return x, y, t, p


def _noise(spec, rng):
    n = rng.poisson(spec.noise_rate * spec.width * spec.height * spec.duration_s)
    x = rng.integers(0, spec.width, n)
    y = rng.integers(0, spec.height, n)
    t = np.sort(rng.integers(0, spec.duration_us, n))
    p = rng.choice(np.array([-1, 1], dtype=np.int8), n)
    return x, y, t, p


def _merge(a, b):
    """Merge two time-sorted column tuples; ties keep ``a`` first."""
    ta, tb = a[2], b[2]
    n = len(ta) + len(tb)
    pos_b = np.searchsorted(ta, tb, side="right") + np.arange(len(tb))
    from_b = np.zeros(n, dtype=bool)
    from_b[pos_b] = True
    out = []
    for ca, cb in zip(a, b):
        col = np.empty(n, dtype=np.result_type(ca.dtype, cb.dtype))
        col[from_b] = cb
        col[~from_b] = ca
        out.append(col)
    return tuple(out)


def generate(spec: SceneSpec) -> EventStream:
    """Render ``spec`` into a time-sorted event stream (deterministic in ``seed``)."""
    spec.validate()
    period = ground_truth_period_us(spec)
    rng = np.random.default_rng(spec.seed)

    def rough(n):
        return rng.uniform(-spec.edge_roughness, spec.edge_roughness, n)

    xs, ys, phases, pols = _CROSSINGS[spec.kind](spec, period, rough)
    phases = np.mod(phases + spec.phase * period, period)
    phases[phases >= period] = 0.0
    signal = _tile_periods(
        xs, ys, phases, pols, period, spec.duration_us, spec.events_per_crossing
    )
    if spec.noise_rate > 0:
        signal = _merge(signal, _noise(spec, rng))
    return EventStream(spec.geometry, *signal)


# -- key=value scene files ------------------------------------------------

_FIELD_TYPES = {
    "kind": str,
    "width": int,
    "height": int,
    "seed": int,
}


def _convert(name, value):
    value = value.strip()
    if name in ("center_x", "center_y", "mark_extent") and value.lower() in ("", "none"):
        return None
    conv = _FIELD_TYPES.get(name, float)
    try:
        return conv(value)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {value!r} as {conv.__name__}") from None


def parse_scene(text: str) -> SceneSpec:
    """Parse a flat ``key = value`` scene description (``#`` starts a comment)."""
    known = {f.name for f in fields(SceneSpec)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"scene: line {lineno} is not key=value: {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"{key}: unknown scene field")
        values[key] = _convert(key, value)
    for required in ("kind", "frequency_hz", "duration_s"):
        if required not in values:
            raise ConfigError(f"{required}: missing from scene description")
    spec = SceneSpec(**values)
    spec.validate()
    return spec


def load_scene(path) -> SceneSpec:
    return parse_scene(Path(path).read_text())


def scene_to_text(spec: SceneSpec) -> str:
    lines = []
    for key, value in asdict(spec).items():
        lines.append(f"{key} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"
