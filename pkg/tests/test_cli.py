"""Command-line interface: exit codes, outputs, and artifact files."""

import json
import subprocess
import sys


from gwmixer import graph_from_json, load_checkpoint
from gwmixer.cli import cli_main

CONLLU_TWO = """\
1\tthe\t_\t_\t_\t_\t2\t_\t_\t_
2\tcat\t_\t_\t_\t_\t3\t_\t_\t_
3\tsat\t_\t_\t_\t_\t0\t_\t_\t_

1\ton\t_\t_\t_\t_\t2\t_\t_\t_
2\tmats\t_\t_\t_\t_\t0\t_\t_\t_
"""

TINY_CONFIG = dict(d=8, k=1, layers=1, ffn_mult=2, vocab=8, task="copy",
                   n=6, steps=8, seed=0)


class TestExitCodes:
    def test_unknown_command_is_usage_error(self, capsys):
        assert cli_main(["transmogrify"]) == 2
        capsys.readouterr()

    def test_missing_required_argument_is_usage_error(self, capsys):
        assert cli_main(["train", "--config", "x.json"]) == 2  # no --out
        capsys.readouterr()

    def test_no_command_is_usage_error(self, capsys):
        assert cli_main([]) == 2
        capsys.readouterr()

    def test_runtime_failure_is_one(self, capsys):
        code = cli_main(["train", "--config", "/nonexistent.json", "--out", "/tmp/x"])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_exclusive_spectrum_sources(self, tmp_path, capsys):
        code = cli_main(["spectrum", "--checkpoint", "a.json", "--seed", "1",
                         "--out", str(tmp_path / "s.csv")])
        assert code == 2
        capsys.readouterr()


class TestGradcheckCommand:
    def test_pass_prints_entries_and_status(self, capsys):
        assert cli_main(["gradcheck", "--selector", "filter"]) == 0
        out = capsys.readouterr().out
        assert "rel_err" in out
        assert "PASS: max rel err" in out

    def test_fail_exits_one(self, capsys):
        assert cli_main(["gradcheck", "--selector", "filter", "--tol", "1e-18"]) == 1
        assert "FAIL: max rel err" in capsys.readouterr().out


class TestSpectrumCommand:
    def test_fresh_bank_csv(self, tmp_path, capsys):
        out = tmp_path / "spec.csv"
        assert cli_main(["spectrum", "--k", "3", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "lambda,g_1,g_2,g_3"
        assert len(lines) == 513  # header + 512 grid points
        first = lines[1].split(",")
        assert float(first[0]) == 0.0
        assert all(float(v) > 0.0 for v in first[1:])
        capsys.readouterr()

    def test_checkpoint_layer_out_of_range(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(TINY_CONFIG))
        run = tmp_path / "run"
        assert cli_main(["train", "--config", str(cfg), "--out", str(run)]) == 0
        code = cli_main(["spectrum", "--checkpoint", str(run / "checkpoint.json"),
                         "--layer", "5", "--out", str(tmp_path / "s.csv")])
        assert code == 1
        assert "out of range" in capsys.readouterr().err

    def test_checkpoint_source(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(TINY_CONFIG))
        run = tmp_path / "run"
        cli_main(["train", "--config", str(cfg), "--out", str(run)])
        out = tmp_path / "s.csv"
        assert cli_main(["spectrum", "--checkpoint", str(run / "checkpoint.json"),
                         "--out", str(out)]) == 0
        assert out.read_text().splitlines()[0] == "lambda,g_1"  # k=1 model
        capsys.readouterr()


class TestTrainEvalCommands:
    def test_train_writes_artifacts(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(TINY_CONFIG))
        run = tmp_path / "run"
        assert cli_main(["train", "--config", str(cfg), "--out", str(run)]) == 0
        out = capsys.readouterr().out
        assert "trained 8 steps" in out
        config, params = load_checkpoint(run / "checkpoint.json")
        assert config["steps"] == 8
        assert (run / "metrics.csv").read_text().startswith("step,loss,lr,grad_norm")

    def test_eval_runs_on_checkpoint(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(TINY_CONFIG))
        run = tmp_path / "run"
        cli_main(["train", "--config", str(cfg), "--out", str(run)])
        capsys.readouterr()
        assert cli_main(["eval", "--checkpoint", str(run / "checkpoint.json"),
                         "--samples", "4"]) == 0
        out = capsys.readouterr().out
        assert "token_accuracy" in out
        assert "samples 4" in out

    def test_eval_mode_override(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(TINY_CONFIG))
        run = tmp_path / "run"
        cli_main(["train", "--config", str(cfg), "--out", str(run)])
        capsys.readouterr()
        assert cli_main(["eval", "--checkpoint", str(run / "checkpoint.json"),
                         "--samples", "2", "--mode", "chebyshev:30"]) == 0
        capsys.readouterr()

    def test_unknown_config_key_fails(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({**TINY_CONFIG, "bogus": 1}))
        assert cli_main(["train", "--config", str(cfg),
                         "--out", str(tmp_path / "run")]) == 1
        assert "bogus" in capsys.readouterr().err


class TestBenchCommand:
    def test_writes_csv_and_slopes(self, tmp_path, capsys):
        out = tmp_path / "bench.csv"
        assert cli_main(["bench", "--sizes", "8,16", "--d", "4", "--k", "1",
                         "--modes", "exact", "--repeats", "1",
                         "--out", str(out)]) == 0
        stdout = capsys.readouterr().out
        assert "slope[exact] = " in stdout
        text = out.read_text()
        assert "n,d,k,mode,seconds,peak_bytes,checksum" in text
        assert "# slope[exact] = " in text

    def test_stdout_when_no_out(self, capsys):
        assert cli_main(["bench", "--sizes", "8,16", "--d", "4", "--k", "1",
                         "--modes", "exact", "--repeats", "1"]) == 0
        assert "n,d,k,mode,seconds,peak_bytes,checksum" in capsys.readouterr().out


class TestBuildGraphCommand:
    def test_jsonl_output(self, tmp_path, capsys):
        src = tmp_path / "trees.conllu"
        src.write_text(CONLLU_TWO)
        out = tmp_path / "graphs.jsonl"
        assert cli_main(["build-graph", "--conllu", str(src),
                         "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 2
        g0 = graph_from_json(lines[0])
        assert g0.n == 3
        assert g0.edges == ((1, 0), (2, 1))  # head -> dependent
        assert graph_from_json(lines[1]).n == 2
        capsys.readouterr()

    def test_sentence_selector(self, tmp_path, capsys):
        src = tmp_path / "trees.conllu"
        src.write_text(CONLLU_TWO)
        out = tmp_path / "one.jsonl"
        assert cli_main(["build-graph", "--conllu", str(src), "--out", str(out),
                         "--sentence", "1"]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 1
        assert graph_from_json(lines[0]).n == 2
        capsys.readouterr()

    def test_sentence_out_of_range(self, tmp_path, capsys):
        src = tmp_path / "trees.conllu"
        src.write_text(CONLLU_TWO)
        assert cli_main(["build-graph", "--conllu", str(src),
                         "--out", str(tmp_path / "x.jsonl"),
                         "--sentence", "5"]) == 1
        assert "out of range" in capsys.readouterr().err


class TestConsoleScript:
    def test_entry_point_wires_exit_code(self):
        code = (
            "import sys; from gwmixer.cli import main; "
            "sys.argv = ['gwmixer', 'gradcheck', '--selector', 'filter']; main()"
        )
        proc = subprocess.run([sys.executable, "-c", code],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "PASS" in proc.stdout
