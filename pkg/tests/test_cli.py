"""Command-line behavior: subcommands, overrides, exit codes."""

import json
import subprocess
import sys

import pytest

from flowbrick import cli
from flowbrick.errors import ConfigError, FlowbrickError
from flowbrick.pipeline import PipelineConfig


class TestAttackSpecs:
    def test_full_spec(self):
        a = cli.parse_attack("many_to_one:5000:3:7:10.0.0.7:30")
        assert a.kind == "many_to_one"
        assert a.magnitude == 5000
        assert (a.start_window, a.end_window) == (3, 7)
        assert a.target_keys == (0x0A000007,)
        assert a.fanout == 30

    def test_default_fanout_and_multi_keys(self):
        a = cli.parse_attack("many_to_many:100:0:1:5+6+7")
        assert a.target_keys == (5, 6, 7)
        assert a.fanout == 20

    def test_bad_specs(self):
        for text in ("many_to_one:5000:3:7", "sideways:1:0:1:5",
                     "many_to_one:x:0:1:5", "many_to_one:1:0:1:1.2.3"):
            with pytest.raises(ConfigError):
                cli.parse_attack(text)


class TestExitCodes:
    def test_no_subcommand(self, capsys):
        assert cli.main([]) == cli.EXIT_CONFIG
        assert "subcommand" in capsys.readouterr().err

    def test_unknown_flag(self, capsys):
        assert cli.main(["run", "--warp", "9"]) == cli.EXIT_CONFIG

    def test_missing_input_file(self, tmp_path):
        rc = cli.main(["run", "--input", str(tmp_path / "nope.csv"),
                       "--out", str(tmp_path)])
        assert rc == cli.EXIT_IO

    def test_bad_config_file(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("m=not_a_number\n")
        assert cli.main(["run", "--config", str(p)]) == cli.EXIT_CONFIG

    def test_internal_error_mapped(self, monkeypatch, tmp_path):
        def explode(*a, **kw):
            raise FlowbrickError("wires crossed")

        monkeypatch.setattr(cli, "run", explode)
        rc = cli.main(["run", "--windows", "1", "--rate", "10",
                       "--out", str(tmp_path)])
        assert rc == cli.EXIT_INTERNAL

    def test_help_exits_zero(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["--help"])
        assert exc.value.code == 0


class TestGenerate:
    def test_writes_csv(self, tmp_path, capsys):
        out = tmp_path / "flows.csv"
        rc = cli.main(["generate", "--seed", "3", "--windows", "4",
                       "--rate", "50", "--out", str(out)])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "timestamp,src,dst,bytes,packets"
        assert len(lines) == 1 + 4 * 50
        assert "wrote 200 records across 4 windows" in capsys.readouterr().out

    def test_module_entry_point(self, tmp_path):
        out = tmp_path / "flows.csv"
        proc = subprocess.run(
            [sys.executable, "-m", "flowbrick.cli", "generate", "--windows",
             "2", "--rate", "10", "--out", str(out)],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert out.exists()


class TestRunCommand:
    def test_run_and_report(self, tmp_path, capsys):
        rc = cli.main(["run", "--seed", "9", "--windows", "6", "--rate",
                       "400", "--mc-reps", "400", "--out", str(tmp_path)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "windows processed: 6" in out
        assert "records processed: 2400" in out
        run_dir = next(tmp_path.iterdir())
        for name in ("config.txt", "summary.json", "alerts.jsonl",
                     "bricks.jsonl", "hitters.jsonl", "tail.jsonl",
                     "community.jsonl"):
            assert (run_dir / name).exists()
        summary = json.loads((run_dir / "summary.json").read_text())
        assert summary["windows"] == 6
        assert summary["records"] == 2400
        rc = cli.main(["report", str(run_dir)])
        assert rc == 0
        assert "alerts:" in capsys.readouterr().out

    def test_flag_overrides_config_file(self, tmp_path):
        cfg_path = tmp_path / "c.txt"
        PipelineConfig(rate=100, windows=9).to_file(cfg_path)
        rc = cli.main(["run", "--config", str(cfg_path), "--rate", "150",
                       "--windows", "2", "--detectors", "frechet",
                       "--out", str(tmp_path / "runs")])
        assert rc == 0
        run_dir = next((tmp_path / "runs").iterdir())
        resolved = PipelineConfig.from_file(run_dir / "config.txt")
        assert resolved.rate == 150
        assert resolved.windows == 2
        assert resolved.detectors == ("frechet",)

    def test_empty_input_file(self, tmp_path, capsys):
        src = tmp_path / "empty.csv"
        src.write_text("timestamp,src,dst,bytes,packets\n")
        rc = cli.main(["run", "--input", str(src), "--out",
                       str(tmp_path / "runs")])
        assert rc == 0
        assert "windows processed: 0" in capsys.readouterr().out


class TestEvaluateCommand:
    def test_table_output(self, capsys):
        rc = cli.main(["evaluate", "--windows", "14", "--rate", "400",
                       "--mc-reps", "400", "--grace", "3", "--trials", "1",
                       "--detectors", "frechet", "--no-out",
                       "--attack", "many_to_one:2000000:7:8:777"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "precision" in out and "recall" in out
        assert "frechet" in out

    def test_requires_attack(self, capsys):
        rc = cli.main(["evaluate", "--windows", "4", "--no-out"])
        assert rc == cli.EXIT_CONFIG

    def test_grid_rows(self, capsys, tmp_path):
        rc = cli.main(["evaluate", "--windows", "12", "--rate", "300",
                       "--mc-reps", "400", "--trials", "1",
                       "--detectors", "frechet",
                       "--p0-grid", "0.9,0.99", "--out", str(tmp_path),
                       "--attack", "many_to_one:2000000:6:7:777"])
        assert rc == 0
        out = capsys.readouterr().out
        assert out.count("frechet       dst") == 2
        eval_dir = next(tmp_path.iterdir())
        results = json.loads((eval_dir / "eval_results.json").read_text())
        assert {r["p0"] for r in results["rows"]} == {0.9, 0.99}


class TestReportAndDiag:
    def test_report_missing_file(self, tmp_path):
        assert cli.main(["report", str(tmp_path / "gone.jsonl")]) == cli.EXIT_IO

    def test_report_corrupt_line(self, tmp_path):
        p = tmp_path / "alerts.jsonl"
        p.write_text('{"window": 1, "detector": "x", "array": "dst", "bins": []}\nnot json\n')
        assert cli.main(["report", str(p)]) == cli.EXIT_IO

    def test_diag_prints_estimates(self, capsys):
        rc = cli.main(["diag", "--windows", "5", "--rate", "1500",
                       "--limit", "5"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "spectrum" in out
        assert "median spectrum alpha over 5 windows" in out
