"""Command-line entry point: ``evperiod {synth,estimate,sweep,frames,validate}``.

Every failure ends with one JSON line on stderr,
``{"error": <category>, "message": ...}``, and a category-specific exit code.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from . import ingest
from .correlation import MAX_OVER_SHIFTS, NORMALIZED, RAW, ZERO_SHIFT
from .errors import ConfigError, FormatError, InsufficientPeaksError, PeriodError
from .estimation import PeakConfig
from .events import RegionOfInterest, validate_stream
from .frames import ADDITIVE, OVERWRITE, build_frames, frame_to_pgm, select_template
from .pipeline import estimate
from .synth import generate, ground_truth_period_us, load_scene

EXIT_CODES = {"config": 2, "io": 3, "format": 4, "insufficient_peaks": 5}

CORR_MODES = {"zero": ZERO_SHIFT, "shift": MAX_OVER_SHIFTS}
CORR_NORMS = {"raw": RAW, "norm": NORMALIZED}

# run options that may also come from a --config file, with their defaults
RUN_DEFAULTS = {
    "input": None,
    "scene": None,
    "format": "auto",
    "roi": None,
    "duration_us": None,
    "template": "auto",
    "corr_mode": "zero",
    "corr_norm": "norm",
    "backend": "direct",
    "min_prominence": 0.3,
    "min_separation_us": None,
    "unit": "hz",
    "additive": False,
    "refine_peaks": False,
    "seed": None,
}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("config", message)


@dataclass(frozen=True)
class RunConfig:
    input: str | None
    scene: str | None
    format: str
    roi: RegionOfInterest
    duration_us: int
    template: object
    corr_mode: str
    corr_norm: str
    backend: str
    peaks: PeakConfig
    unit: str
    aggregation: str
    refine: bool
    seed: int | None

    def describe(self) -> dict:
        """Parameters echoed into the JSON report."""
        return {
            "input": self.input,
            "scene": self.scene,
            "seed": self.seed,
            "roi": [self.roi.x0, self.roi.y0, self.roi.x1, self.roi.y1],
            "duration_us": self.duration_us,
            "template": self.template,
            "corr_mode": self.corr_mode,
            "corr_norm": self.corr_norm,
            "backend": self.backend,
            "min_prominence": self.peaks.min_prominence,
            "min_separation_us": self.peaks.separation_for(self.duration_us),
            "aggregation": self.aggregation,
            "refine_peaks": self.refine,
        }


def read_config_file(path) -> dict:
    """``key = value`` lines; keys are flag names with or without dashes."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError("io", f"config: cannot read {path}: {exc.strerror or exc}") from None
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config: line {lineno} is not key=value: {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in RUN_DEFAULTS:
            raise ConfigError(f"config: unknown key {key!r} on line {lineno}")
        values[key] = value
    return values


def _as_bool(name, value):
    if isinstance(value, bool):
        return value
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{name}: expected a boolean, got {value!r}")


def _as_int(name, value):
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected an integer, got {value!r}") from None


def _as_float(name, value):
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a number, got {value!r}") from None


def _choice(name, value, allowed):
    if value not in allowed:
        raise ConfigError(f"{name}: expected one of {', '.join(allowed)}, got {value!r}")
    return value


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Merge flags over the optional config file and validate every field."""
    merged = dict(RUN_DEFAULTS)
    if getattr(args, "config", None):
        merged.update(read_config_file(args.config))
    for key in RUN_DEFAULTS:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            merged[key] = value

    if merged["input"] is None and merged["scene"] is None:
        raise ConfigError("input: an event file (--input) or a scene (--scene) is required")
    if merged["input"] is not None and merged["scene"] is not None:
        raise ConfigError("input: give either --input or --scene, not both")
    fmt = _choice("format", merged["format"], ("auto", "binary", "text"))
    if merged["roi"] is None:
        raise ConfigError("roi: required (x0,y0,x1,y1)")
    roi = merged["roi"]
    if not isinstance(roi, RegionOfInterest):
        roi = RegionOfInterest.parse(str(roi))
    if merged["duration_us"] is None:
        raise ConfigError("duration-us: required")
    duration = _as_int("duration-us", merged["duration_us"])
    if duration < 1:
        raise ConfigError(f"duration-us: must be >= 1, got {duration}")

    template = merged["template"]
    if str(template) != "auto":
        template = _as_int("template", template)
        if template < 0:
            raise ConfigError(f"template: index must be >= 0, got {template}")

    sep = merged["min_separation_us"]
    peaks = PeakConfig(
        min_prominence=_as_float("min-prominence", merged["min_prominence"]),
        min_separation_us=None if sep is None else _as_int("min-separation-us", sep),
    )
    peaks.separation_for(duration)

    seed = merged["seed"]
    return RunConfig(
        input=merged["input"],
        scene=merged["scene"],
        format=fmt,
        roi=roi,
        duration_us=duration,
        template=template,
        corr_mode=CORR_MODES[_choice("corr-mode", merged["corr_mode"], tuple(CORR_MODES))],
        corr_norm=CORR_NORMS[_choice("corr-norm", merged["corr_norm"], tuple(CORR_NORMS))],
        backend=_choice("backend", merged["backend"], ("direct", "transform")),
        peaks=peaks,
        unit=_choice("unit", merged["unit"], ("hz", "rpm")),
        aggregation=ADDITIVE if _as_bool("additive", merged["additive"]) else OVERWRITE,
        refine=_as_bool("refine-peaks", merged["refine_peaks"]),
        seed=None if seed is None else _as_int("seed", seed),
    )


def _read_input(path, fmt):
    try:
        return ingest.read_stream(Path(path), format=fmt)
    except OSError as exc:
        raise CliError("io", f"input: cannot read {path}: {exc.strerror or exc}") from None


def load_stream(cfg: RunConfig):
    if cfg.scene is not None:
        try:
            spec = load_scene(cfg.scene)
        except OSError as exc:
            raise CliError("io", f"scene: cannot read {cfg.scene}: {exc.strerror or exc}") from None
        if cfg.seed is not None:
            spec = spec.with_(seed=cfg.seed)
        stream = generate(spec)
    else:
        stream = _read_input(cfg.input, cfg.format)
    cfg.roi.check_inside(stream.geometry)
    return stream


def _write(path, data, label):
    if path == "-":
        sys.stdout.write(data if isinstance(data, str) else data.decode())
        return
    try:
        p = Path(path)
        if isinstance(data, str):
            p.write_text(data)
        else:
            p.write_bytes(data)
    except OSError as exc:
        raise CliError("io", f"{label}: cannot write {path}: {exc.strerror or exc}") from None


def _dump_frames(seq, directory, limit=None):
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError("io", f"dump-frames: cannot create {out}: {exc.strerror or exc}") from None
    n = len(seq) if limit is None else min(limit, len(seq))
    for k in range(n):
        _write(out / f"frame_{k:06d}.pgm", frame_to_pgm(seq.cells[k]), "dump-frames")
    return n


def _run_estimate(cfg, stream, roi=None, duration=None):
    return estimate(
        stream,
        roi or cfg.roi,
        duration or cfg.duration_us,
        template=cfg.template,
        mode=cfg.corr_mode,
        normalization=cfg.corr_norm,
        backend=cfg.backend,
        peaks=cfg.peaks,
        unit=cfg.unit,
        aggregation=cfg.aggregation,
        refine=cfg.refine,
    )


# -- subcommands -------------------------------------------------------------


def cmd_estimate(args) -> int:
    cfg = build_run_config(args)
    stream = load_stream(cfg)
    result = _run_estimate(cfg, stream)
    report = result.report
    extra = {"config": cfg.describe(), "template_index": result.template.source_index}
    if args.report:
        _write(args.report, report.to_json(extra), "report")
    if args.csv:
        _write(args.csv, report.to_csv(), "csv")
    if args.scores:
        _write(args.scores, result.response.to_csv(), "scores")
    if args.dump_frames:
        _dump_frames(result.frames, args.dump_frames)
    if args.report != "-" and args.csv != "-" and args.scores != "-":
        for s in report.seconds:
            print(f"[{s.t_bucket};{s.t_bucket + 1})  M={s.M:<5d} {s.formatted()}")
        print(f"overall  N={report.n_peaks}  {report.overall.formatted()} {cfg.unit}")
    return 0


def _parse_list(name, text):
    items = [s for s in (p.strip() for p in text.split(",")) if s]
    if not items:
        raise ConfigError(f"{name}: empty sweep list")
    return [_as_int(name, s) for s in items]


def cmd_sweep(args) -> int:
    if (args.sweep_durations is None) == (args.sweep_roi_sizes is None):
        raise ConfigError("sweep: give exactly one of --sweep-durations or --sweep-roi-sizes")
    if args.sweep_durations is not None:
        axis, values = "duration_us", _parse_list("sweep-durations", args.sweep_durations)
    else:
        axis, values = "roi_size", _parse_list("sweep-roi-sizes", args.sweep_roi_sizes)
    for v in values:
        if v < 1:
            raise ConfigError(f"{axis}: sweep values must be >= 1, got {v}")
    cfg = build_run_config(args)
    stream = load_stream(cfg)
    cx, cy = cfg.roi.center

    rows = []
    for v in values:
        row = {axis: v}
        try:
            if axis == "duration_us":
                result = _run_estimate(cfg, stream, duration=v)
            else:
                roi = RegionOfInterest.centered(cx, cy, v)
                roi.check_inside(stream.geometry)
                row["roi"] = [roi.x0, roi.y0, roi.x1, roi.y1]
                result = _run_estimate(cfg, stream, roi=roi)
        except PeriodError as exc:
            row.update(status=exc.category, message=str(exc))
        else:
            o = result.report.overall
            row.update(status="ok", N=result.report.n_peaks, mean=o.mean,
                       two_sigma=o.two_sigma, value=o.formatted())
        rows.append(row)

    header = f"{axis},status,{cfg.unit} ± 2σ"
    lines = [header] + [f"{r[axis]},{r['status']},{r.get('value', '')}" for r in rows]
    table = "\n".join(lines) + "\n"
    if args.table:
        _write(args.table, table, "table")
    if args.report:
        doc = {"schema": "evperiod.sweep/1", "axis": axis, "unit": cfg.unit,
               "config": cfg.describe(), "rows": rows}
        _write(args.report, json.dumps(doc, indent=2, sort_keys=True) + "\n", "report")
    if args.table != "-" and args.report != "-":
        sys.stdout.write(table)
    return 0


def cmd_frames(args) -> int:
    cfg = build_run_config(args)
    stream = load_stream(cfg)
    seq = build_frames(stream, cfg.roi, cfg.duration_us, mode=cfg.aggregation)
    print(f"frames: {len(seq)} of {seq.side}x{seq.side} cells, {cfg.duration_us} us each")
    if len(seq):
        tpl = select_template(seq, cfg.template)
        print(f"template: frame {tpl.source_index} ({tpl.frame.event_count} active cells)")
    if args.dump_frames:
        n = _dump_frames(seq, args.dump_frames, args.limit)
        print(f"wrote {n} frames to {args.dump_frames}")
    return 0


def cmd_validate(args) -> int:
    if not args.input:
        raise ConfigError("input: required")
    fmt = _choice("format", args.format or "auto", ("auto", "binary", "text"))
    stream = _read_input(args.input, fmt)
    check = validate_stream(stream)
    if not check:
        raise FormatError(f"violation at index {check.index}: {check.reason}")
    t = stream.t
    span = int(t[-1] - t[0]) if len(stream) else 0
    print(f"ok: {len(stream)} events, {stream.geometry.width}x{stream.geometry.height}, "
          f"{span} us")
    return 0


def cmd_synth(args) -> int:
    try:
        spec = load_scene(args.spec)
    except OSError as exc:
        raise CliError("io", f"spec: cannot read {args.spec}: {exc.strerror or exc}") from None
    if args.seed is not None:
        spec = spec.with_(seed=args.seed)
    fmt = args.format or ingest.format_for_path(args.output)
    _choice("format", fmt, ("binary", "text"))
    stream = generate(spec)
    _write(args.output, ingest.write_stream(stream, fmt), "output")
    period = ground_truth_period_us(spec)
    print(json.dumps({"events": len(stream), "period_us": period,
                      "frequency_hz": spec.frequency_hz,
                      "rpm": spec.frequency_hz * 60}, sort_keys=True))
    return 0


# -- argument parsing --------------------------------------------------------


def _add_run_options(p):
    src = p.add_argument_group("input")
    src.add_argument("--input", help="event file (binary or text)")
    src.add_argument("--scene", help="scene description to synthesize instead of --input")
    src.add_argument("--format", choices=("auto", "binary", "text"))
    src.add_argument("--seed", type=int, help="override the scene seed (with --scene)")
    src.add_argument("--config", help="key=value file; flags take precedence")

    run = p.add_argument_group("pipeline")
    run.add_argument("--roi", help="x0,y0,x1,y1 (half-open, square)")
    run.add_argument("--duration-us", help="aggregation duration in microseconds")
    run.add_argument("--template", help="auto or a frame index")
    run.add_argument("--corr-mode", choices=tuple(CORR_MODES))
    run.add_argument("--corr-norm", choices=tuple(CORR_NORMS))
    run.add_argument("--backend", choices=("direct", "transform"))
    run.add_argument("--min-prominence", help="fraction of the response range")
    run.add_argument("--min-separation-us")
    run.add_argument("--unit", choices=("hz", "rpm"))
    run.add_argument("--additive", action="store_true",
                     help="sum polarities per cell instead of keeping the last one")
    run.add_argument("--refine-peaks", action="store_true",
                     help="parabolic sub-frame peak positions")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evperiod",
                     description="Frequency and RPM estimation from event-camera streams.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic event file")
    p.add_argument("spec", help="scene description (key = value lines)")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--format", choices=("binary", "text"))
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("estimate", help="estimate the period of an event stream")
    _add_run_options(p)
    out = p.add_argument_group("outputs")
    out.add_argument("--report", help="JSON report path ('-' for stdout)")
    out.add_argument("--csv", help="per-second table path")
    out.add_argument("--scores", metavar="PATH", help="correlation response CSV")
    out.add_argument("--dump-frames", metavar="DIR", help="write every frame as PGM")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sweep", help="estimate over a list of durations or RoI sizes")
    _add_run_options(p)
    p.add_argument("--sweep-durations", help="comma-separated durations in us")
    p.add_argument("--sweep-roi-sizes", help="comma-separated RoI sides, centered on --roi")
    p.add_argument("--table", help="CSV table path")
    p.add_argument("--report", help="JSON rows path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("frames", help="aggregate frames and optionally dump them")
    _add_run_options(p)
    p.add_argument("--dump-frames", metavar="DIR")
    p.add_argument("--limit", type=int, help="dump at most this many frames")
    p.set_defaults(func=cmd_frames)

    p = sub.add_parser("validate", help="check an event file")
    p.add_argument("--input")
    p.add_argument("--format", choices=("auto", "binary", "text"))
    p.set_defaults(func=cmd_validate)
    return parser


def _fail(category, message) -> int:
    sys.stderr.write(json.dumps({"error": category, "message": message}) + "\n")
    return EXIT_CODES[category]


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        return _fail(exc.category, str(exc))
    except (ConfigError, FormatError, InsufficientPeaksError) as exc:
        return _fail(exc.category, str(exc))
    except OSError as exc:
        return _fail("io", f"{getattr(exc, 'filename', None) or 'io'}: {exc.strerror or exc}")


if __name__ == "__main__":
    sys.exit(main())
