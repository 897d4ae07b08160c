import csv
import json
import math
from pathlib import Path

import pytest

from rapgen.cli import EXIT_CONFIG, EXIT_OK, main

FAST_BELL = {"name": "bell2", "sweep_width": 2 * math.pi * 4.0}


def write_config(tmp_path, payload) -> Path:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload))
    return path


def read_rows(path: Path) -> list[dict]:
    with open(path) as handle:
        return list(csv.DictReader(handle))


class TestSimulateCommand:
    def test_happy_path_artifacts(self, tmp_path):
        cfg = write_config(
            tmp_path,
            {
                "experiment": "simulate",
                "protocol": FAST_BELL,
                "options": {"checkpoints": 20},
                "output_dir": str(tmp_path / "out"),
            },
        )
        assert main(["simulate", "--config", str(cfg)]) == EXIT_OK
        out = tmp_path / "out"
        for name in ("manifest.json", "result.json", "populations.csv", "waveform.csv"):
            assert (out / name).exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["tool"] == "rapgen"
        rows = read_rows(out / "populations.csv")
        assert set(rows[0]) == {"t", "state", "population"}
        assert len(rows) == 20 * 9

    def test_unknown_protocol_exit_code_and_message(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path,
            {"experiment": "simulate", "protocol": {"name": "bell99"}, "output_dir": str(tmp_path)},
        )
        assert main(["simulate", "--config", str(cfg)]) == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "protocol.name" in err

    def test_subcommand_mismatch(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path,
            {"experiment": "saturation", "protocol": FAST_BELL, "output_dir": str(tmp_path)},
        )
        assert main(["simulate", "--config", str(cfg)]) == EXIT_CONFIG
        assert "experiment" in capsys.readouterr().err


class TestDeterminism:
    def test_montecarlo_csv_byte_identical(self, tmp_path):
        base = {
            "experiment": "montecarlo",
            "protocol": FAST_BELL,
            "options": {"sigma_grid": [0.0, 0.02], "n_samples": 3, "dims": 2},
            "seed": 17,
        }
        outputs = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            cfg = write_config(tmp_path, {**base, "output_dir": str(out)})
            assert main(["montecarlo", "--config", str(cfg)]) == EXIT_OK
            outputs.append((out / "montecarlo.csv").read_bytes())
        assert outputs[0] == outputs[1]

    def test_manifest_config_round_trip(self, tmp_path):
        from rapgen.config import load_config, parse_config

        out = tmp_path / "out"
        cfg_path = write_config(
            tmp_path,
            {
                "experiment": "simulate",
                "protocol": FAST_BELL,
                "options": {"checkpoints": 10},
                "output_dir": str(out),
                "seed": 5,
            },
        )
        assert main(["simulate", "--config", str(cfg_path)]) == EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        reparsed = parse_config(manifest["config"])
        assert reparsed == load_config(cfg_path)


class TestConvention:
    def test_paper_convention_squares_fidelity(self, tmp_path):
        results = {}
        for conv in ("standard", "paper"):
            out = tmp_path / conv
            cfg = write_config(
                tmp_path,
                {
                    "experiment": "simulate",
                    "protocol": FAST_BELL,
                    "options": {"checkpoints": 10},
                    "output_dir": str(out),
                },
            )
            assert main(["simulate", "--config", str(cfg), "--convention", conv]) == EXIT_OK
            results[conv] = json.loads((out / "result.json").read_text())["fidelity"]
        assert results["paper"] == pytest.approx(results["standard"] ** 2, rel=1e-12)


class TestExperimentCommands:
    def test_saturation_artifacts(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(
            tmp_path,
            {
                "experiment": "saturation",
                "protocol": dict(FAST_BELL, preset="none"),
                "options": {"v0_grid": {"start": 0.5, "stop": 1.5, "num": 5}},
                "output_dir": str(out),
            },
        )
        assert main(["saturation", "--config", str(cfg)]) == EXIT_OK
        rows = read_rows(out / "saturation.csv")
        assert len(rows) == 5
        summary = json.loads((out / "summary.json").read_text())
        assert "v_sat" in summary

    def test_robustness_min_fidelity_summary(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(
            tmp_path,
            {
                "experiment": "robustness",
                "protocol": FAST_BELL,
                "options": {"omega_scales": [0.95, 1.0, 1.05], "delta_scales": [1.0]},
                "output_dir": str(out),
            },
        )
        assert main(["robustness", "--config", str(cfg)]) == EXIT_OK
        rows = read_rows(out / "robustness.csv")
        assert len(rows) == 3
        summary = json.loads((out / "summary.json").read_text())
        assert 0.0 <= summary["min_fidelity"] <= 1.0

    def test_timescan_artifacts(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(
            tmp_path,
            {
                "experiment": "timescan",
                "protocol": FAST_BELL,
                "options": {"total_time_us_grid": [0.3, 0.6], "baseline": "pi_pulse"},
                "output_dir": str(out),
            },
        )
        assert main(["timescan", "--config", str(cfg)]) == EXIT_OK
        rows = read_rows(out / "timescan.csv")
        assert [r["baseline"] for r in rows] == ["pi_pulse", "pi_pulse"]

    def test_optimize_artifacts(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(
            tmp_path,
            {
                "experiment": "optimize",
                "protocol": dict(FAST_BELL, preset="none"),
                "options": {"max_evals": 8},
                "output_dir": str(out),
            },
        )
        assert main(["optimize", "--config", str(cfg)]) == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert summary["n_evaluations"] <= 9
        rows = read_rows(out / "optimize_trace.csv")
        assert set(rows[0]) == {"omega_max", "delta_max", "fidelity"}

    def test_missing_required_option(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path,
            {"experiment": "saturation", "protocol": FAST_BELL, "output_dir": str(tmp_path)},
        )
        assert main(["saturation", "--config", str(cfg)]) == EXIT_CONFIG
        assert "options.v0_grid" in capsys.readouterr().err
