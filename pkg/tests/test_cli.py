import json
import shutil
import subprocess

import pytest

from jointabsa import cli
from jointabsa.config import ConfigError
from jointabsa.corpus import AspectAnnotation, SentenceExample, write_dataset


def tiny_corpus():
    def ex(idx, tokens, aspects):
        return SentenceExample(
            id=f"c{idx}",
            tokens=tuple(tokens),
            aspects=tuple(AspectAnnotation(*a) for a in aspects),
        )

    return [
        ex(0, ["the", "screen", "is", "great"], [(1, 1, "positive")]),
        ex(1, ["the", "battery", "is", "terrible"], [(1, 1, "negative")]),
        ex(2, ["the", "keyboard", "is", "okay"], [(1, 1, "neutral")]),
        ex(3, ["the", "screen", "is", "terrible"], [(1, 1, "negative")]),
        ex(4, ["it", "arrived", "on", "time"], []),
        ex(5, ["the", "battery", "is", "great"], [(1, 1, "positive")]),
    ]


@pytest.fixture(scope="module")
def corpus_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus") / "train.jsonl"
    write_dataset(tiny_corpus(), path)
    return path


def train_argv(corpus, out, *extra):
    return [
        "train",
        "--train", str(corpus),
        "--out", str(out),
        "--embed-dim", "8",
        "--hidden-dim", "8",
        "--epochs", "2",
        "--seed", "0",
        *extra,
    ]


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory, corpus_path):
    out = tmp_path_factory.mktemp("ckpt") / "model.npz"
    assert cli.main(train_argv(corpus_path, out)) == 0
    return out


class TestTrain:
    def test_writes_checkpoint_and_log(self, tmp_path, corpus_path, capsys):
        out = tmp_path / "run.npz"
        assert cli.main(train_argv(corpus_path, out)) == 0
        stdout = capsys.readouterr().out
        assert "best joint F1" in stdout
        assert str(out) in stdout
        assert out.exists()
        log_lines = (tmp_path / "run.log").read_text().splitlines()
        assert len(log_lines) == 2
        record = json.loads(log_lines[0])
        assert set(record) == {
            "epoch", "j_ae", "j_sc", "js", "total", "dev_f1", "dev_ae_f1", "dev_sc_acc",
        }

    def test_default_output_name(self, tmp_path, corpus_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        argv = train_argv(corpus_path, "model.npz")
        del argv[3:5]
        assert cli.main(argv) == 0
        capsys.readouterr()
        assert (tmp_path / "model.npz").exists()
        assert (tmp_path / "model.log").exists()

    def test_log_is_deterministic(self, tmp_path, corpus_path, capsys):
        for name in ("a.npz", "b.npz"):
            assert cli.main(train_argv(corpus_path, tmp_path / name)) == 0
        capsys.readouterr()
        assert (tmp_path / "a.log").read_bytes() == (tmp_path / "b.log").read_bytes()

    def test_flag_beats_config_file(self, tmp_path, corpus_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("epochs = 3\nembed_dim = 8\nhidden_dim = 8\nseed = 0\n")
        out = tmp_path / "run.npz"
        argv = [
            "train", "--config", str(cfg), "--train", str(corpus_path),
            "--out", str(out), "--epochs", "2",
        ]
        assert cli.main(argv) == 0
        capsys.readouterr()
        assert len((tmp_path / "run.log").read_text().splitlines()) == 2

    def test_missing_corpus_flag(self, capsys):
        assert cli.main(["train"]) == 2
        assert "error:" in capsys.readouterr().err

    def test_nonexistent_corpus_file(self, tmp_path, capsys):
        assert cli.main(["train", "--train", str(tmp_path / "nope.jsonl")]) == 2
        assert "error:" in capsys.readouterr().err

    def test_invalid_flag_value(self, corpus_path, capsys):
        argv = ["train", "--train", str(corpus_path), "--alpha", "0.9"]
        assert cli.main(argv) == 2
        assert "alpha" in capsys.readouterr().err


class TestEvaluate:
    def test_prints_table_and_record(self, checkpoint, corpus_path, capsys):
        argv = ["evaluate", "--checkpoint", str(checkpoint), "--data", str(corpus_path)]
        assert cli.main(argv) == 0
        lines = capsys.readouterr().out.splitlines()
        assert any(line.startswith("joint") for line in lines)
        record = json.loads(lines[-1])
        assert set(record) == {"joint", "ae", "sc_acc"}
        assert set(record["joint"]) == {"p", "r", "f1"}

    def test_out_file_matches_stdout(self, checkpoint, corpus_path, tmp_path, capsys):
        out = tmp_path / "report.json"
        argv = [
            "evaluate", "--checkpoint", str(checkpoint),
            "--data", str(corpus_path), "--out", str(out),
        ]
        assert cli.main(argv) == 0
        last = capsys.readouterr().out.splitlines()[-1]
        assert out.read_text().strip() == last

    def test_missing_checkpoint(self, corpus_path, capsys):
        argv = ["evaluate", "--checkpoint", "missing.npz", "--data", str(corpus_path)]
        assert cli.main(argv) == 2
        assert "error:" in capsys.readouterr().err


class TestDecode:
    def test_record_schema(self, checkpoint, corpus_path, capsys):
        argv = ["decode", "--checkpoint", str(checkpoint), "--data", str(corpus_path)]
        assert cli.main(argv) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == len(tiny_corpus())
        for line, ex in zip(lines, tiny_corpus()):
            record = json.loads(line)
            assert record["id"] == ex.id
            for span in record["spans"]:
                assert set(span) == {"start", "end", "score", "polarity"}
                assert 0 <= span["start"] <= span["end"] < len(ex.tokens)
                assert span["polarity"] in {"positive", "negative", "neutral"}

    def test_out_file(self, checkpoint, corpus_path, tmp_path, capsys):
        out = tmp_path / "spans.jsonl"
        argv = [
            "decode", "--checkpoint", str(checkpoint),
            "--data", str(corpus_path), "--out", str(out),
        ]
        assert cli.main(argv) == 0
        assert capsys.readouterr().out == ""
        assert len(out.read_text().splitlines()) == len(tiny_corpus())


class TestGradcheck:
    def test_bundled_toy_passes(self, capsys):
        argv = ["gradcheck", "--embed-dim", "6", "--hidden-dim", "4"]
        assert cli.main(argv) == 0
        stdout = capsys.readouterr().out
        assert "max relative gradient error:" in stdout
        err = float(stdout.rsplit(":", 1)[1])
        assert err < cli.GRADCHECK_LIMIT

    def test_defaults_without_config(self, monkeypatch, capsys):
        seen = {}

        def fake(cfg, batch_, vocab_size=None, step=1e-5):
            seen["cfg"], seen["step"] = cfg, step
            return 5e-4

        monkeypatch.setattr(cli, "model_grad_check", fake)
        assert cli.main(["gradcheck"]) == 0
        assert seen["cfg"].embed_dim == 8
        assert seen["cfg"].hidden_dim == 8
        assert seen["step"] == 1e-5
        assert "5.000e-04" in capsys.readouterr().out

    def test_failure_exit_code(self, monkeypatch, capsys):
        monkeypatch.setattr(cli, "model_grad_check", lambda *a, **k: 2e-3)
        assert cli.main(["gradcheck"]) == 1
        captured = capsys.readouterr()
        assert "FAIL" in captured.err


class TestSweepAndAblate:
    def fast_argv(self, verb, corpus_path, *extra):
        return [
            verb,
            "--train", str(corpus_path),
            "--embed-dim", "8",
            "--hidden-dim", "8",
            "--epochs", "1",
            "--seed", "0",
            *extra,
        ]

    def test_sweep_alpha_grid(self, corpus_path, tmp_path, capsys):
        out = tmp_path / "sweep.txt"
        argv = self.fast_argv("sweep-alpha", corpus_path, "--out", str(out))
        assert cli.main(argv) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "alpha  joint_f1  ae_f1  sc_acc"
        rows = lines[1:]
        assert [row.split()[0] for row in rows] == ["0.0", "0.1", "0.2", "0.3", "0.4", "0.5"]
        for row in rows:
            assert len(row.split()) == 4
        assert out.read_text().splitlines() == lines

    def test_ablate_variants(self, corpus_path, capsys):
        assert cli.main(self.fast_argv("ablate", corpus_path)) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "variant  joint_f1  ae_f1  sc_acc"
        assert [row.split()[0] for row in lines[1:]] == ["full", "no-shallow", "no-deep"]


class TestExitCodes:
    def test_config_error_maps_to_2(self, monkeypatch, capsys):
        def boom(args):
            raise ConfigError("synthetic breakage")

        monkeypatch.setattr(cli, "cmd_train", boom)
        assert cli.main(["train"]) == 2
        assert "error: synthetic breakage" in capsys.readouterr().err

    def test_floating_point_error_maps_to_1(self, monkeypatch, capsys):
        def boom(args):
            raise FloatingPointError("non-finite loss at step 3")

        monkeypatch.setattr(cli, "cmd_train", boom)
        assert cli.main(["train"]) == 1
        assert "numeric failure: non-finite loss" in capsys.readouterr().err

    def test_unknown_verb(self, capsys):
        with pytest.raises(SystemExit):
            cli.main(["frobnicate"])

    def test_verb_is_required(self, capsys):
        with pytest.raises(SystemExit):
            cli.main([])


class TestConsoleScript:
    def test_entry_point_installed(self):
        assert shutil.which("jointabsa") is not None

    def test_help_lists_verbs(self):
        result = subprocess.run(
            ["jointabsa", "--help"], capture_output=True, text=True, timeout=60
        )
        assert result.returncode == 0
        for verb in ("train", "evaluate", "decode", "gradcheck", "sweep-alpha", "ablate"):
            assert verb in result.stdout

    def test_log_env_controls_stderr(self, tmp_path, corpus_path):
        argv = train_argv(corpus_path, tmp_path / "m.npz")
        quiet = subprocess.run(
            ["jointabsa", *argv], capture_output=True, text=True, timeout=300,
            env={"PATH": "/usr/local/bin:/usr/bin:/bin", "JOINTABSA_LOG": "quiet"},
        )
        assert quiet.returncode == 0
        assert "INFO" not in quiet.stderr
        argv = train_argv(corpus_path, tmp_path / "n.npz")
        debug = subprocess.run(
            ["jointabsa", *argv], capture_output=True, text=True, timeout=300,
            env={"PATH": "/usr/local/bin:/usr/bin:/bin", "JOINTABSA_LOG": "debug"},
        )
        assert debug.returncode == 0
        assert "DEBUG" in debug.stderr
