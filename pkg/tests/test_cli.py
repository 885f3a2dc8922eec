import filecmp
import hashlib
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from asl import cli, norms
from asl.experiments import StudyResult
from asl.presets import PRESETS, Preset
from asl.spectral import ScalarField, TorusGrid, read_field

TWIN = """\
[experiment]
kind = twin_run
seed = 3

[grid]
n = 32

[model]
type = 1
law = biot_savart

[time]
dt = 0.01
t_end = 0.2

[initial]
kind = smooth_random
amplitude = 3.0
kmax = 6

[twin]
eps = 1e-6
checks = envelope_type1
p = 8
"""


def write(tmp_path, text, name="exp.txt"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def tree(root):
    """Relative path -> bytes for every file below ``root``."""
    out = {}
    for dirpath, _, files in os.walk(root):
        for name in files:
            full = os.path.join(dirpath, name)
            with open(full, "rb") as fh:
                out[os.path.relpath(full, root)] = fh.read()
    return out


def stub_result(monkeypatch, result=None, exc=None):
    def fake(cfg):
        if exc is not None:
            raise exc
        return result
    monkeypatch.setattr(cli, "execute_config", fake)


class TestRun:
    def test_twin_run_writes_artifacts(self, tmp_path):
        out = tmp_path / "out"
        status = cli.main(["run", write(tmp_path, TWIN), "--out", str(out)])
        assert status == cli.EXIT_OK
        names = set(os.listdir(out))
        assert {"config.txt", "manifest.json", "verdicts.csv", "distance.csv", "report.json",
                "rho1_final.asf", "rho2_final.asf", "envelope_type1_p8.csv"} <= names
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 3 and manifest["kind"] == "twin_run"
        assert manifest["status"] == 0
        assert manifest["verdicts"]["envelope_type1_p8"] is True
        assert set(manifest["versions"]) == {"asl", "numpy", "python"}
        assert manifest["config"] == (out / "config.txt").read_text()

    def test_manifest_hashes_match_files(self, tmp_path):
        out = tmp_path / "out"
        cli.main(["run", write(tmp_path, TWIN), "--out", str(out)])
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest["files"]) == set(os.listdir(out)) - {"manifest.json"}
        for name, digest in manifest["files"].items():
            assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest

    def test_manifest_config_reproduces_run(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        cli.main(["run", write(tmp_path, TWIN), "--out", str(a)])
        echo = write(tmp_path, (a / "config.txt").read_text(), "echo.txt")
        cli.main(["run", echo, "--out", str(b)])
        ta, tb = tree(a), tree(b)
        assert ta == tb

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = write(tmp_path, TWIN)
        cli.main(["run", cfg, "--out", str(tmp_path / "a")])
        cli.main(["run", cfg, "--out", str(tmp_path / "b")])
        cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
        assert cmp.left_only == [] and cmp.right_only == []
        assert tree(tmp_path / "a") == tree(tmp_path / "b")

    def test_output_key_used_without_out(self, tmp_path):
        target = tmp_path / "from_config"
        cfg = write(tmp_path, TWIN.replace("seed = 3", f"seed = 3\noutput = {target}"))
        assert cli.main(["run", cfg]) == cli.EXIT_OK
        assert (target / "manifest.json").exists()

    def test_no_timestamps_in_files(self, tmp_path, capsys):
        out = tmp_path / "out"
        cli.main(["run", write(tmp_path, TWIN), "--out", str(out)])
        stdout = capsys.readouterr().out
        assert stdout.startswith("PASS") and " s)" in stdout
        manifest = (out / "manifest.json").read_text()
        assert "time" not in json.loads(manifest)
        assert "seconds" not in manifest


class TestExitCodes:
    def test_config_error_is_2(self, tmp_path, capsys):
        status = cli.main(["run", write(tmp_path, TWIN.replace("n = 32", "n = 48"))])
        assert status == cli.EXIT_USAGE
        err = capsys.readouterr().err
        assert "line 6" in err and "power of two" in err

    def test_missing_file_is_2(self, tmp_path):
        assert cli.main(["run", str(tmp_path / "absent.txt")]) == cli.EXIT_USAGE

    def test_unknown_preset_is_2(self, capsys):
        assert cli.main(["preset", "nope"]) == cli.EXIT_USAGE
        assert "available" in capsys.readouterr().err

    def test_usage_error_exits_2(self):
        with pytest.raises(SystemExit) as info:
            cli.main(["frobnicate"])
        assert info.value.code == 2

    def test_failed_verdict_is_1(self, tmp_path, monkeypatch):
        stub_result(monkeypatch, StudyResult("twin_run", "", verdicts={"a": True, "b": False}))
        out = tmp_path / "out"
        assert cli.main(["run", write(tmp_path, TWIN), "--out", str(out)]) == cli.EXIT_FAIL
        assert (out / "verdicts.csv").read_text() == "verdict,ok\na,1\nb,0\n"
        assert not (out / "error.json").exists()

    def test_partial_run_is_1_with_error_report(self, tmp_path, monkeypatch):
        stub_result(monkeypatch, StudyResult("twin_run", "", verdicts={"completed": False},
                                             error="t = 0.03: step rejected"))
        out = tmp_path / "out"
        assert cli.main(["run", write(tmp_path, TWIN), "--out", str(out)]) == cli.EXIT_FAIL
        report = json.loads((out / "error.json").read_text())
        assert report == {"type": "StepError", "message": "t = 0.03: step rejected"}
        assert json.loads((out / "manifest.json").read_text())["error"] == report

    def test_raised_error_is_3(self, tmp_path, monkeypatch):
        stub_result(monkeypatch, exc=RuntimeError("solver exploded"))
        out = tmp_path / "out"
        assert cli.main(["run", write(tmp_path, TWIN), "--out", str(out)]) == cli.EXIT_ERROR
        report = json.loads((out / "error.json").read_text())
        assert report == {"type": "RuntimeError", "message": "solver exploded"}
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == 3 and manifest["verdicts"] == {}

    def test_status_depends_only_on_verdicts(self, tmp_path, monkeypatch):
        for verdicts, expected in (({}, 0), ({"x": True}, 0), ({"x": True, "y": False}, 1)):
            stub_result(monkeypatch, StudyResult("twin_run", "", verdicts=verdicts, metrics={"m": 1.0}))
            assert cli.main(["run", write(tmp_path, TWIN), "--out", str(tmp_path / "o")]) == expected

    def test_bad_thread_count(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ASL_THREADS", "zero")
        assert cli.main(["verify-all", "--out", str(tmp_path)]) == cli.EXIT_USAGE
        monkeypatch.setenv("ASL_THREADS", "0")
        assert cli.main(["verify-all", "--out", str(tmp_path)]) == cli.EXIT_USAGE


class TestPreset:
    def test_list(self, capsys):
        assert cli.main(["preset", "--list"]) == cli.EXIT_OK
        listed = [line.split()[0] for line in capsys.readouterr().out.splitlines()]
        assert listed == list(PRESETS)

    def test_preset_with_overrides(self, tmp_path):
        out = tmp_path / "p"
        status = cli.main(["preset", "spectral_exactness", "--n", "32", "--seed", "5", "--out", str(out)])
        assert status == cli.EXIT_OK
        manifest = json.loads((out / "modes" / "manifest.json").read_text())
        assert manifest["preset"] == "spectral_exactness" and manifest["part"] == "modes"
        assert manifest["seed"] == 5
        assert "n = 32\n" in manifest["config"]

    def test_dt_override_reaches_config(self, tmp_path):
        out = tmp_path / "p"
        assert cli.main(["preset", "euler_single_run", "--quick", "--dt", "0.02", "--out", str(out)]) == 0
        assert "dt = 0.02\n" in (out / "euler" / "config.txt").read_text()

    def test_bad_override_is_2(self, tmp_path):
        assert cli.main(["preset", "spectral_exactness", "--n", "40", "--out", str(tmp_path)]) == cli.EXIT_USAGE


class TestNorms:
    def test_norms_of_written_field(self, tmp_path, capsys):
        grid = TorusGrid(32)
        x, y = grid.mesh
        f = ScalarField(grid, np.sin(x) + 0.5 * np.cos(3 * y))
        path = str(tmp_path / "f.asf")
        from asl.spectral import write_field
        write_field(path, f)
        assert cli.main(["norms", path, "--p", "2,inf", "--depth", "3"]) == cli.EXIT_OK
        rows = [line.split(",") for line in capsys.readouterr().out.strip().splitlines()]
        assert rows[0] == ["name", "p_or_s", "depth", "value"]
        table = {(r[0], r[1]): float(r[3]) for r in rows[1:]}
        g = read_field(path)
        assert table[("lp", "2.0")] == pytest.approx(norms.lp_norm(g, 2), rel=1e-14)
        assert table[("lp", "inf")] == pytest.approx(np.abs(g.values).max(), rel=1e-14)
        assert table[("sobolev", "-1")] == pytest.approx(norms.sobolev_norm(g, -1), rel=1e-14)
        assert any(r[0] == "bmo" and r[2] == "3" for r in rows[1:])

    def test_norms_bad_file_is_2(self, tmp_path):
        bad = tmp_path / "bad.asf"
        bad.write_text("not a field")
        assert cli.main(["norms", str(bad)]) == cli.EXIT_USAGE


def small_presets(monkeypatch):
    keep = ("spectral_exactness", "velocity_conditions", "euler_single_run", "numerical_uniqueness")
    monkeypatch.setattr(cli, "PRESETS", {k: PRESETS[k] for k in keep})
    return keep


class TestVerifyAll:
    def test_layout_and_summary(self, tmp_path, monkeypatch):
        keep = small_presets(monkeypatch)
        assert cli.main(["verify-all", "--quick", "--out", str(tmp_path)]) == cli.EXIT_OK
        for name in keep:
            for part, _ in PRESETS[name].parts:
                assert (tmp_path / name / part / "manifest.json").exists()
        summary = (tmp_path / "summary.csv").read_text().splitlines()
        assert summary[0] == "preset,part,verdict,ok"
        assert all(line.endswith(",1") for line in summary[1:])
        top = json.loads((tmp_path / "manifest.json").read_text())
        assert top["quick"] is True and set(top["presets"]) == set(keep)

    def test_processes_match_serial(self, tmp_path, monkeypatch):
        small_presets(monkeypatch)
        monkeypatch.setenv("ASL_THREADS", "1")
        cli.main(["verify-all", "--quick", "--out", str(tmp_path / "serial")])
        monkeypatch.setenv("ASL_THREADS", "3")
        cli.main(["verify-all", "--quick", "--out", str(tmp_path / "pool")])
        assert tree(tmp_path / "serial") == tree(tmp_path / "pool")

    def test_failure_propagates(self, tmp_path, monkeypatch):
        failing = Preset("failing", "", (("x", "[experiment]\nkind = condition_check\nseed = 0\n"),))
        monkeypatch.setattr(cli, "PRESETS", {"failing": failing})
        monkeypatch.setattr(cli, "get_preset", lambda name: failing)
        stub_result(monkeypatch, StudyResult("condition_check", "", verdicts={"c3": False}))
        assert cli.main(["verify-all", "--out", str(tmp_path)]) == cli.EXIT_FAIL
        assert (tmp_path / "summary.csv").read_text() == "preset,part,verdict,ok\nfailing,x,c3,0\n"


class TestEntryPoint:
    def test_console_module(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "asl.cli", "preset", "--list"],
                              capture_output=True, text=True, check=False)
        assert proc.returncode == 0
        assert "sqg_dissipative_q4" in proc.stdout
