import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from transfinite import polyspline as ps
from transfinite.cli import main


def write_config(tmp_path, **overrides):
    cfg = {"p": 2, "knots": [0.0, 1.0, 2.5], "n": 1, "K": 4, "grid_m": 10,
           "data": {"synthetic": {"seed": 1}}, "seed": 0}
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def fitted(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["fit", "--config", str(cfg)]) == 0
    return tmp_path


class TestFit:
    def test_writes_model_and_report(self, fitted):
        model = json.loads((fitted / "model.json").read_text())
        assert len(model["modes"]) == 9
        report = json.loads((fitted / "fit_report.json").read_text())
        assert report["modes"] == 9
        assert report["discarded_fraction"] < 1e-12

    def test_byte_identical_refit(self, fitted):
        first = (fitted / "model.json").read_bytes()
        assert main(["fit", "--config", str(fitted / "config.json")]) == 0
        assert (fitted / "model.json").read_bytes() == first

    def test_bad_config(self, tmp_path):
        assert main(["fit", "--config", str(write_config(tmp_path, p=1))]) == 2
        assert main(["fit", "--config", str(write_config(tmp_path, bogus=3))]) == 2
        assert main(["fit", "--config", str(tmp_path / "missing.json")]) == 2

    def test_bad_data(self, tmp_path):
        (tmp_path / "a.csv").write_text("1,2,3\n")
        cfg = write_config(tmp_path, data={"csv": ["a.csv", "a.csv", "a.csv"]})
        assert main(["fit", "--config", str(cfg)]) == 3

    def test_csv_data(self, tmp_path):
        y = 2 * np.pi * np.arange(10) / 10
        for j in range(3):
            np.savetxt(tmp_path / f"h{j}.csv", (j + np.cos(y))[None, :], delimiter=",")
        cfg = write_config(tmp_path, data={"csv": [f"h{j}.csv" for j in range(3)]})
        assert main(["fit", "--config", str(cfg)]) == 0


class TestEval:
    def test_knots_reproduce_data(self, fitted, capsys):
        assert main(["eval", "--model", str(fitted / "model.json"), "--grid", "t=knots;y1=data", "--out", "-"]) == 0
        rows = read_csv(capsys.readouterr().out)
        assert len(rows) == 3 * 10
        cfg = ps.PolyConfig(2, [0.0, 1.0, 2.5], 1, 4, 10)
        data = ps.band_limited_data(cfg, seed=1).slices.ravel()
        got = np.array([float(r["value"]) for r in rows])
        assert np.max(np.abs(got - data)) <= 1e-9 * np.max(np.abs(data))

    def test_single_point(self, fitted, capsys):
        assert main(["eval", "--model", str(fitted / "model.json"), "--grid", "t=0.5;y1=1.0", "--out", "-"]) == 0
        rows = read_csv(capsys.readouterr().out)
        assert len(rows) == 1 and set(rows[0]) == {"t", "y1", "value"}

    def test_derivative_column(self, fitted, capsys):
        args = ["eval", "--model", str(fitted / "model.json"), "--grid", "t=0:1:3;y1=0", "--out", "-"]
        assert main(args + ["--deriv", "1,1"]) == 0
        rows = read_csv(capsys.readouterr().out)
        assert rows[0]["d_spec"] == "1;1"

    def test_derivative_too_high(self, fitted):
        args = ["eval", "--model", str(fitted / "model.json"), "--grid", "t=0;y1=0", "--out", "-"]
        assert main(args + ["--deriv", "2,1"]) == 2

    def test_bad_grid(self, fitted):
        assert main(["eval", "--model", str(fitted / "model.json"), "--grid", "t=0:1", "--out", "-"]) == 2
        assert main(["eval", "--model", str(fitted / "model.json"), "--grid", "y1=0", "--out", "-"]) == 2

    def test_malformed_model(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["eval", "--model", str(bad), "--grid", "t=0", "--out", "-"]) == 3

    def test_file_output(self, fitted):
        out = fitted / "grid.csv"
        assert main(["eval", "--model", str(fitted / "model.json"), "--grid", "t=-1:3:5", "--out", str(out)]) == 0
        assert len(read_csv(out.read_text())) == 5 * 10


class TestVerify:
    def test_identity_suite(self, tmp_path, capsys):
        cfg = write_config(tmp_path, K=2, grid_m=6)
        assert main(["verify", "--config", str(cfg), "--suite", "identity"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["passed"] and report["checks"]

    def test_unknown_suite(self, tmp_path):
        assert main(["verify", "--config", str(write_config(tmp_path)), "--suite", "nope"]) == 2

    def test_report_file(self, tmp_path, capsys):
        cfg = write_config(tmp_path, K=1, grid_m=4, output={"verify_report": "v.json"})
        assert main(["verify", "--config", str(cfg), "--suite", "kernel"]) == 0
        assert json.loads((tmp_path / "v.json").read_text())["passed"]


class TestSeminorm:
    def test_zero_model(self, tmp_path, capsys):
        (tmp_path / "b.json").write_text(json.dumps({"slices": np.zeros((3, 4)).tolist()}))
        cfg = write_config(tmp_path, K=1, grid_m=4, data={"bundle": "b.json"})
        assert main(["fit", "--config", str(cfg)]) == 0
        capsys.readouterr()
        assert main(["seminorm", "--model", str(tmp_path / "model.json")]) == 0
        assert json.loads(capsys.readouterr().out)["total"] == 0

    def test_malformed(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"format": "transfinite-polyspline"}')
        assert main(["seminorm", "--model", str(bad)]) == 3


def test_module_entry_point(fitted):
    out = subprocess.run([sys.executable, "-m", "transfinite", "seminorm", "--model", str(fitted / "model.json")],
                         capture_output=True, text=True, check=True)
    assert json.loads(out.stdout)["max_delta"] <= 1e-7
