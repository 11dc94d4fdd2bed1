import json
import subprocess
import sys

import pytest

from qsim import cli


def run(tmp_path, command, config, name="cfg.json"):
    path = tmp_path / name
    path.write_text(config if isinstance(config, str) else json.dumps(config))
    out = tmp_path / "out"
    code = cli.main([command, "--config", str(path), "--out", str(out)])
    report = None
    if (out / "report.json").exists():
        report = json.loads((out / "report.json").read_text())
    return code, report, out


class TestVerify:
    @pytest.mark.parametrize(
        "config",
        [
            {"protocol": "switch3", "seed": 1, "trials": 3},
            {"protocol": "echo", "seed": 2, "backend": "both", "trials": 3},
            {"protocol": "chain5", "seed": 3, "g_range": [1, 3], "backend": "both", "trials": 2},
            {"protocol": "cross", "seed": 4, "trials": 1},
            {"protocol": "gen1d", "seed": 5, "m": 4, "backend": "both", "g_range": [1, 3]},
            {"protocol": "gen2d", "seed": 6, "m": 4, "backend": "tableau"},
            {"protocol": "gen3d", "seed": 7, "backend": "tableau", "tiles": 2, "g_range": [1, 3]},
            {"protocol": "switch3", "seed": 8, "mode": "physical", "g": 10.0, "lambda": 1e3},
        ],
    )
    def test_passes(self, tmp_path, config):
        code, report, _ = run(tmp_path, "verify", config)
        assert code == cli.EXIT_OK
        assert report["pass"] is True

    def test_gen2d_report_content(self, tmp_path):
        code, report, _ = run(tmp_path, "verify", {"protocol": "gen2d", "seed": 0, "m": 4, "backend": "tableau"})
        assert code == 0
        cert = report["certificates"]["tableau"]
        assert len(cert["stabilizers"]) == 16
        assert all(s["expectation"] == 1 for s in cert["stabilizers"])

    def test_malformed_json(self, tmp_path):
        code, report, _ = run(tmp_path, "verify", "{not json")
        assert code == cli.EXIT_USAGE and report is None

    @pytest.mark.parametrize(
        "config",
        [
            {"protocol": "switch3"},
            {"protocol": "teleport", "seed": 1},
            {"protocol": "gen2d", "seed": 1, "m": 4, "backend": "dense"},
            {"protocol": "gen1d", "seed": 1, "m": 3},
            {"protocol": "echo", "seed": 1, "mode": "physical", "lambda": 5.0},
        ],
    )
    def test_config_errors(self, tmp_path, config):
        code, _, _ = run(tmp_path, "verify", config)
        assert code == cli.EXIT_USAGE

    def test_missing_config_file(self, tmp_path):
        assert cli.main(["verify", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2

    def test_check_failure_exit_code(self, tmp_path, monkeypatch):
        monkeypatch.setattr(cli, "FIDELITY_TOL", -1.0)
        code, report, _ = run(tmp_path, "verify", {"protocol": "switch3", "seed": 1, "trials": 1})
        assert code == cli.EXIT_FAIL and report["pass"] is False


class TestSweep:
    CONFIG = {
        "variant": "switch3",
        "lambda_T2": {"min": 1e2, "max": 1e6, "num": 5},
        "g_T2": {"min": 1, "max": 1e6, "num": 60},
    }

    def test_outputs(self, tmp_path):
        code, report, out = run(tmp_path, "sweep", self.CONFIG)
        assert code == 0 and report["rows"] == 300
        header = (out / "sweep.csv").read_text().splitlines()[0]
        assert header == "lambda_T2,g_T2,eps_pi2,eps_d,F"
        assert (out / "optimum.csv").read_text().splitlines()[0] == "lambda_T2,g_star_T2,F_star"

    def test_byte_identical(self, tmp_path):
        _, _, out = run(tmp_path, "sweep", self.CONFIG)
        first = (out / "sweep.csv").read_bytes(), (out / "optimum.csv").read_bytes()
        _, _, out = run(tmp_path, "sweep", self.CONFIG)
        assert ((out / "sweep.csv").read_bytes(), (out / "optimum.csv").read_bytes()) == first

    def test_chain5_variant(self, tmp_path):
        code, _, out = run(tmp_path, "sweep", {**self.CONFIG, "variant": "chain5"})
        assert code == 0
        rows = [line.split(",") for line in (out / "optimum.csv").read_text().splitlines()[1:]]
        F = [float(r[2]) for r in rows]
        assert F == sorted(F)

    @pytest.mark.parametrize("bad", [{"lambda_T2": [], "g_T2": [1]}, {"lambda_T2": {"min": 1, "max": 2, "num": 0}, "g_T2": [1]}])
    def test_empty_range(self, tmp_path, bad):
        code, _, _ = run(tmp_path, "sweep", bad)
        assert code == cli.EXIT_USAGE


class TestOptimal:
    def test_outputs(self, tmp_path):
        code, report, out = run(tmp_path, "optimal", {"lambda_T2": [1e3, 1e4, 1e5], "variant": "chain5"})
        assert code == 0
        assert [o["fallback"] for o in report["optima"]] == [False] * 3
        assert len((out / "optimum.csv").read_text().splitlines()) == 4


class TestDemoFailure:
    def test_report(self, tmp_path):
        cfg = {"epsilon_m": [0, 0.01, 0.1, 0.5], "times": [0.0, 0.4, 1.2], "g": 1.3, "seed": 2}
        code, report, _ = run(tmp_path, "demo-failure", cfg)
        assert code == 0
        zero = [p for p in report["points"] if p["epsilon_m"] == 0]
        assert all(p["trace_distance"] == pytest.approx(0, abs=1e-15) for p in zero)
        assert all(p["trace_distance"] <= p["epsilon_m"] + 1e-12 for p in report["points"])

    def test_out_of_range(self, tmp_path):
        code, _, _ = run(tmp_path, "demo-failure", {"epsilon_m": [0.2, 1.5]})
        assert code == cli.EXIT_USAGE


def test_console_script_entry_point(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"protocol": "switch3", "seed": 0, "trials": 1}))
    proc = subprocess.run(
        [sys.executable, "-m", "qsim.cli", "verify", "--config", str(cfg), "--out", str(tmp_path / "o")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "verify: pass" in proc.stdout


def test_usage_error_exit_code(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "qsim.cli", "frobnicate"], capture_output=True)
    assert proc.returncode == 2


def test_published_schemas_match():
    from pathlib import Path

    doc = Path(__file__).resolve().parents[1] / "docs" / "config-schemas.json"
    assert json.loads(doc.read_text()) == cli.SCHEMAS
