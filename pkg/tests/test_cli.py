"""End-to-end runner tests: exit codes, artifacts, determinism."""

import csv
import json
import math
import os
import xml.dom.minidom

import numpy as np
import pytest

from gaborprop import cli, core


SMALL = """\
[grid]
l = 32
n = 512

[lattice]
alpha = 0.5
beta = pi
xmax = 8
ximax = 10

[symbol]
parts = {parts}

[field]
kind = atom
x0 = 0.5
xi0 = 1.0

[time]
t = 0.25
nsteps = 16

[oracle]
steps = 1024

[stft]
xmax = 6
ximax = 6

[matrix]
radius_cells = 8

[envelope]
kappas = 1.0

[flow]
nodes = 1 0; 0 1

[nls]
coupling = 1.0
t0 = 0.1
nsteps = 8
steps = 64
"""


def write_cfg(tmp_path, name="run.cfg", parts="kinetic", extra=""):
    path = tmp_path / name
    path.write_text(SMALL.format(parts=parts) + extra)
    return str(path)


def run(args):
    return cli.main(list(args))


def report(outdir):
    with open(os.path.join(outdir, "report.json")) as fh:
        return json.load(fh)


def test_propagate_writes_report_and_field(tmp_path):
    cfg = write_cfg(tmp_path)
    out = str(tmp_path / "out")
    assert run(["propagate", "--config", cfg, "--out", out]) == 0
    rep = report(out)
    assert rep["subcommand"] == "propagate"
    assert rep["ledger_version"] == "gaborprop-conventions-1"
    assert len(rep["config_hash"]) == 64
    assert rep["results"]["l2_rel_err_vs_reference"] < 1e-3
    assert rep["results"]["volterra_residual"] < 1e-10

    f = cli.read_field(os.path.join(out, "u_T.field"))
    assert f.grid.n == 512
    assert abs(core.norm(f) - 1.0) < 1e-3

    with open(os.path.join(out, "timings.json")) as fh:
        timings = json.load(fh)
    assert timings["threads"] == 1
    assert "volterra" in timings["phases_s"]

    for name in ("norms.csv", "picard.svg", "solution.svg"):
        assert os.path.exists(os.path.join(out, name))


def test_field_file_roundtrip(tmp_path):
    grid = core.make_grid(16.0, 128)
    rng = np.random.default_rng(3)
    f = core.Field(grid, rng.normal(size=128) + 1j * rng.normal(size=128))
    path = str(tmp_path / "probe.field")
    cli.write_field(path, f)
    g = cli.read_field(path)
    assert g.grid.L == grid.L and g.grid.n == grid.n
    assert np.array_equal(g.values, f.values)


def test_reports_are_deterministic_across_runs_and_threads(tmp_path):
    cfg = write_cfg(tmp_path)
    blobs = []
    for name, threads in (("a", "1"), ("b", "1"), ("c", "2")):
        out = str(tmp_path / name)
        code = run(["propagate", "--config", cfg, "--out", out,
                    "--threads", threads])
        assert code == 0
        with open(os.path.join(out, "report.json"), "rb") as fh:
            blobs.append(fh.read())
    assert blobs[0] == blobs[1]
    assert blobs[0] == blobs[2]


def test_flow_csv_matches_rotation(tmp_path):
    cfg = write_cfg(tmp_path, parts="harmonic")
    out = str(tmp_path / "out")
    assert run(["flow", "--config", cfg, "--out", out]) == 0
    with open(os.path.join(out, "flow.csv")) as fh:
        rows = list(csv.DictReader(fh))
    starts = {0: (1.0, 0.0), 1: (0.0, 1.0)}
    worst = 0.0
    for r in rows:
        t, node = float(r["t"]), int(r["node"])
        x0, xi0 = starts[node]
        ex = x0 * math.cos(2 * t) + xi0 * math.sin(2 * t)
        exi = xi0 * math.cos(2 * t) - x0 * math.sin(2 * t)
        worst = max(worst, abs(float(r["x"]) - ex), abs(float(r["xi"]) - exi))
    assert worst < 1e-8


def test_stft_report_contains_moyal_mass(tmp_path):
    cfg = write_cfg(tmp_path)
    out = str(tmp_path / "out")
    assert run(["stft", "--config", cfg, "--out", out]) == 0
    rep = report(out)
    assert abs(rep["results"]["moyal_mass_ratio"] - 1.0) < 1e-6
    doc = xml.dom.minidom.parse(os.path.join(out, "stft.svg"))
    assert doc.documentElement.tagName == "svg"


def test_norm_and_matrix_and_envelope_artifacts(tmp_path):
    cfg = write_cfg(tmp_path)
    for sub, files in (
        ("norm", ("norms.csv", "field.svg")),
        ("gabor-matrix", ("matrix.svg", "matrix_decay.csv")),
        ("envelope", ("envelope.svg", "envelope.csv")),
    ):
        out = str(tmp_path / sub)
        assert run([sub, "--config", cfg, "--out", out]) == 0
        for name in files:
            assert os.path.exists(os.path.join(out, name))
    rep = report(str(tmp_path / "envelope"))
    assert rep["results"]["exponents"]["1"] > 1.7


def test_nls_subcommand(tmp_path):
    cfg = write_cfg(tmp_path)
    out = str(tmp_path / "out")
    assert run(["nls", "--config", cfg, "--out", out]) == 0
    res = report(out)["results"]
    assert res["max_ratio"] < 0.9
    assert res["duhamel_residual"] < 1e-8
    assert res["l2_rel_err_vs_reference"] < 1e-2
    assert os.path.exists(os.path.join(out, "u_T0.field"))


def test_missing_config_exits_1(tmp_path, capsys):
    assert run(["propagate", "--config", str(tmp_path / "nope.cfg")]) == 1
    err = capsys.readouterr().err
    assert json.loads(err.strip())["error"]["type"] == "ConfigError"


def test_dense_lattice_config_exits_1(tmp_path):
    cfg = write_cfg(tmp_path)
    text = open(cfg).read().replace("alpha = 0.5", "alpha = 7.0")
    open(cfg, "w").write(text)
    out = str(tmp_path / "out")
    assert run(["propagate", "--config", cfg, "--out", out]) == 1
    with open(os.path.join(out, "error.json")) as fh:
        doc = json.load(fh)
    assert doc["error"]["type"] == "ConfigError"
    assert "2 pi" in doc["error"]["message"]
    assert doc["exit_code"] == 1


def test_box_exit_is_numerical_failure(tmp_path):
    cfg = write_cfg(tmp_path)
    text = open(cfg).read().replace("xmax = 8", "xmax = 13")
    open(cfg, "w").write(text)
    out = str(tmp_path / "out")
    assert run(["propagate", "--config", cfg, "--out", out]) == 2
    with open(os.path.join(out, "error.json")) as fh:
        doc = json.load(fh)
    assert doc["error"]["type"] == "BoxExitError"
    assert doc["exit_code"] == 2


def test_bad_threads_rejected(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path)
    assert run(["norm", "--config", cfg, "--threads", "0"]) == 1
    monkeypatch.setenv("GABORPROP_THREADS", "many")
    assert run(["norm", "--config", cfg]) == 1


def test_unknown_symbol_part_exits_1(tmp_path):
    cfg = write_cfg(tmp_path, parts="quartic")
    out = str(tmp_path / "out")
    assert run(["flow", "--config", cfg, "--out", out]) == 1


def test_console_script_runs(tmp_path):
    import subprocess

    cfg = write_cfg(tmp_path)
    out = str(tmp_path / "out")
    proc = subprocess.run(
        ["gaborprop", "norm", "--config", cfg, "--out", out],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert os.path.exists(os.path.join(out, "report.json"))
