import json
import subprocess
import sys
from importlib import resources

import jsonschema
import numpy as np
import pytest

from evperiod import RegionOfInterest, read_stream, validate_stream
from evperiod.cli import EXIT_CODES, main

FLASH = """\
kind = flash
frequency_hz = 2000
duration_s = 0.3
width = 200
height = 200
radius = 10
noise_rate = 0.5
seed = 11
"""
ROI = "88,88,112,112"


@pytest.fixture(scope="module")
def flash_file(tmp_path_factory):
    d = tmp_path_factory.mktemp("flash")
    (d / "flash.scene").write_text(FLASH)
    assert main(["synth", str(d / "flash.scene"), "-o", str(d / "flash.ee3p")]) == 0
    return d / "flash.ee3p"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def error_of(err):
    lines = err.strip().splitlines()
    assert len(lines) == 1, err
    return json.loads(lines[0])


def test_synth_prints_period_and_output_validates(tmp_path, capsys):
    (tmp_path / "s.scene").write_text(FLASH)
    code, out, _ = run(capsys, "synth", tmp_path / "s.scene", "-o", tmp_path / "s.csv")
    assert code == 0
    info = json.loads(out)
    assert info["period_us"] == 500.0 and info["rpm"] == 120000.0
    s = read_stream(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_bytes().startswith(b"ee3p-csv v1 200 200")
    assert validate_stream(s) and len(s) == info["events"]


def test_synth_tilted_rotation_footprint(tmp_path, capsys):
    (tmp_path / "r.scene").write_text(
        "kind = rotation\nfrequency_hz = 26.3\nduration_s = 0.1\nwidth = 300\nheight = 200\n"
        "radius = 60\ntilt_deg = 45\n")
    assert run(capsys, "synth", tmp_path / "r.scene", "-o", tmp_path / "r.ee3p")[0] == 0
    s = read_stream(tmp_path / "r.ee3p")
    b = 60 * np.cos(np.radians(45))
    assert np.all(((s.x - 150) / 60) ** 2 + ((s.y - 100) / b) ** 2 <= 1 + 1e-9)


def test_synth_rejects_bad_duty(tmp_path, capsys):
    (tmp_path / "bad.scene").write_text(FLASH + "duty_cycle = 1.5\n")
    code, _, err = run(capsys, "synth", tmp_path / "bad.scene", "-o", tmp_path / "x.ee3p")
    assert code == EXIT_CODES["config"]
    e = error_of(err)
    assert e["error"] == "config" and e["message"].startswith("duty_cycle")


def test_estimate_writes_all_outputs(flash_file, tmp_path, capsys):
    rep, csv, scores, frames = (tmp_path / n for n in ("r.json", "r.csv", "s.csv", "frames"))
    code, out, err = run(capsys, "estimate", "--input", flash_file, "--roi", ROI,
                         "--duration-us", 100, "--report", rep, "--csv", csv,
                         "--scores", scores, "--dump-frames", frames)
    assert code == 0, err
    doc = json.loads(rep.read_text())
    schema = json.loads(resources.files("evperiod").joinpath("report.schema.json").read_text())
    jsonschema.validate(doc, schema)
    assert doc["overall"]["mean"] == 2000.0
    assert doc["config"]["roi"] == [88, 88, 112, 112]
    assert "2000.00 ± 0.00" in out
    assert csv.read_text().splitlines()[0].startswith("t_s,M,mean_hz")
    n_frames = len(scores.read_text().splitlines()) - 1
    assert len(list(frames.glob("frame_*.pgm"))) == n_frames
    assert (frames / "frame_000000.pgm").read_bytes().startswith(b"P5\n24 24\n255\n")


def test_estimate_report_is_byte_identical(flash_file, tmp_path, capsys):
    args = ["estimate", "--input", flash_file, "--roi", ROI, "--duration-us", 100,
            "--unit", "rpm"]
    run(capsys, *args, "--report", tmp_path / "a.json")
    run(capsys, *args, "--report", tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_estimate_from_scene_with_seed(tmp_path, capsys):
    (tmp_path / "f.scene").write_text(FLASH)
    code, out, _ = run(capsys, "estimate", "--scene", tmp_path / "f.scene", "--seed", 3,
                       "--roi", ROI, "--duration-us", 100, "--report", "-")
    assert code == 0
    doc = json.loads(out)
    assert doc["config"]["seed"] == 3 and doc["overall"]["mean_hz"] == 2000.0


@pytest.mark.parametrize("extra", [
    ["--corr-mode", "shift", "--backend", "transform"],
    ["--corr-norm", "raw", "--template", "5"],
    ["--additive", "--min-prominence", "0.4", "--min-separation-us", "300"],
])
def test_estimate_options(flash_file, capsys, extra):
    code, out, err = run(capsys, "estimate", "--input", flash_file, "--roi", ROI,
                         "--duration-us", 100, *extra)
    assert code == 0, err
    assert "2000.00" in out


def test_config_file_and_flag_precedence(flash_file, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"input = {flash_file}\nroi = {ROI}\nduration-us = 1000\nunit = rpm\n")
    code, out, _ = run(capsys, "estimate", "--config", cfg, "--duration-us", 100,
                       "--report", "-")
    assert code == 0
    doc = json.loads(out)
    assert doc["unit"] == "rpm" and doc["config"]["duration_us"] == 100
    cfg.write_text("colour = blue\n")
    code, _, err = run(capsys, "estimate", "--config", cfg)
    assert code == 2 and "colour" in error_of(err)["message"]


@pytest.mark.parametrize("argv, category, field", [
    (["--roi", "10,0,5,5", "--duration-us", "100"], "config", "roi"),
    (["--roi", "0,0,10,12", "--duration-us", "100"], "config", "roi"),
    (["--roi", "190,190,210,210", "--duration-us", "100"], "config", "roi"),
    (["--roi", ROI, "--duration-us", "0"], "config", "duration-us"),
    (["--roi", ROI, "--duration-us", "x"], "config", "duration-us"),
    (["--roi", ROI], "config", "duration-us"),
    (["--duration-us", "100"], "config", "roi"),
    (["--roi", ROI, "--duration-us", "100", "--template", "-3"], "config", "template"),
    (["--roi", ROI, "--duration-us", "100", "--template", "99999"], "config", "template"),
    (["--roi", ROI, "--duration-us", "100", "--min-prominence", "2"], "config", "min-prominence"),
    (["--roi", ROI, "--duration-us", "100", "--min-separation-us", "50"], "config",
     "min-separation-us"),
    (["--roi", "0,0,10,10", "--duration-us", "100"], "insufficient_peaks", "fewer"),
    (["--roi", ROI, "--duration-us", "1000000"], "insufficient_peaks", "fewer"),
])
def test_estimate_error_categories(flash_file, capsys, argv, category, field):
    code, _, err = run(capsys, "estimate", "--input", flash_file, *argv)
    e = error_of(err)
    assert code == EXIT_CODES[category]
    assert e["error"] == category
    assert e["message"].startswith(field)


def test_io_and_format_errors(tmp_path, capsys):
    code, _, err = run(capsys, "estimate", "--input", tmp_path / "missing.ee3p", "--roi", ROI,
                       "--duration-us", 100)
    assert code == 3 and error_of(err)["error"] == "io"
    junk = tmp_path / "junk.ee3p"
    junk.write_bytes(b"not an event file")
    code, _, err = run(capsys, "estimate", "--input", junk, "--roi", ROI, "--duration-us", 100)
    assert code == 4 and error_of(err)["error"] == "format"
    code, _, err = run(capsys, "estimate", "--input", junk, "--scene", junk, "--roi", ROI,
                       "--duration-us", 100)
    assert code == 2


def test_argparse_errors_are_config(capsys):
    code, _, err = run(capsys, "estimate", "--bogus")
    assert code == 2 and error_of(err)["error"] == "config"
    code, _, err = run(capsys, "estimate", "--backend", "gpu")
    assert code == 2
    code, _, err = run(capsys)
    assert code == 2


def test_sweep_durations_reproduce_failure_shape(flash_file, tmp_path, capsys):
    table = tmp_path / "t.csv"
    code, out, _ = run(capsys, "sweep", "--input", flash_file, "--roi", ROI, "--duration-us", 100,
                       "--sweep-durations", "100,250,500,1000", "--table", table,
                       "--report", tmp_path / "rows.json")
    assert code == 0
    rows = json.loads((tmp_path / "rows.json").read_text())["rows"]
    assert [r["duration_us"] for r in rows] == [100, 250, 500, 1000]
    for r in rows[:2]:
        assert r["status"] == "ok" and abs(r["mean"] - 2000) / 2000 <= 0.0004
    for r in rows[2:]:
        assert r["status"] == "insufficient_peaks" or abs(r["mean"] - 2000) / 2000 > 0.1
    assert table.read_text() == out
    assert out.splitlines()[1].startswith("100,ok,2000.00 ± 0.00")


def test_sweep_roi_sizes(flash_file, tmp_path, capsys):
    code, out, _ = run(capsys, "sweep", "--input", flash_file, "--roi", ROI, "--duration-us", 100,
                       "--sweep-roi-sizes", "125,45,20", "--report", "-")
    assert code == 0
    rows = json.loads(out)["rows"]
    assert [r["roi_size"] for r in rows] == [125, 45, 20]
    assert all(r["status"] == "ok" and abs(r["mean"] - 2000) <= 0.8 for r in rows)
    assert rows[0]["roi"] == [38, 38, 163, 163]


def test_sweep_rows_carry_errors(flash_file, capsys):
    code, out, _ = run(capsys, "sweep", "--input", flash_file, "--roi", ROI, "--duration-us", 100,
                       "--sweep-roi-sizes", "24,500")
    assert code == 0
    assert out.splitlines()[2] == "500,config,"


@pytest.mark.parametrize("axis", [[], ["--sweep-durations", ""],
                                  ["--sweep-roi-sizes", ","],
                                  ["--sweep-durations", "100", "--sweep-roi-sizes", "20"]])
def test_sweep_needs_one_nonempty_axis(flash_file, capsys, axis):
    code, _, err = run(capsys, "sweep", "--input", flash_file, "--roi", ROI,
                       "--duration-us", 100, *axis)
    assert code == 2 and error_of(err)["error"] == "config"


def test_frames_command(flash_file, tmp_path, capsys):
    code, out, _ = run(capsys, "frames", "--input", flash_file, "--roi", ROI, "--duration-us", 100,
                       "--dump-frames", tmp_path / "f", "--limit", 4)
    assert code == 0
    assert len(list((tmp_path / "f").iterdir())) == 4
    assert "template: frame" in out


def test_validate_command(flash_file, tmp_path, capsys):
    code, out, _ = run(capsys, "validate", "--input", flash_file)
    assert code == 0 and out.startswith("ok: ")
    bad = tmp_path / "bad.csv"
    bad.write_text("ee3p-csv v1 10 10\n1,1,5,1\n1,1,3,1\n")
    code, _, err = run(capsys, "validate", "--input", bad)
    assert code == 4
    assert "timestamp decreased" in error_of(err)["message"]


def test_module_entry_point_has_no_traceback(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "evperiod", "estimate", "--input",
                           str(tmp_path / "nope"), "--roi", "0,0,4,4", "--duration-us", "10"],
                          capture_output=True, text=True)
    assert proc.returncode == 3
    assert "Traceback" not in proc.stderr
    assert json.loads(proc.stderr)["error"] == "io"
