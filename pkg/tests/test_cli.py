import pytest

from dskg import cli, data
from dskg.config import parse_config_file, resolve_options, write_resolved


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write_tiny_splits(root):
    (root / "train.txt").write_text(
        "a\tp\tb\nb\tp\tc\nc\tq\ta\na\tq\tc\nb\tq\ta\n", encoding="utf-8"
    )
    (root / "valid.txt").write_text("a\tp\tc\n", encoding="utf-8")
    (root / "test.txt").write_text("b\tp\ta\n", encoding="utf-8")
    return root


@pytest.fixture
def tiny_dir(tmp_path):
    return write_tiny_splits(tmp_path)


@pytest.fixture
def trained(tmp_path, capsys):
    """A tiny prepared dataset plus a briefly trained checkpoint."""
    splits = write_tiny_splits(tmp_path)
    prep = tmp_path / "prep"
    code, _, _ = run_cli(capsys, "prepare", "--train", str(splits / "train.txt"),
                         "--valid", str(splits / "valid.txt"), "--test", str(splits / "test.txt"),
                         "--out", str(prep))
    assert code == 0
    out = tmp_path / "run"
    code, _, err = run_cli(
        capsys, "train", "--data", str(prep / "dataset.dskg"), "--out", str(out),
        "--embed-dim", "4", "--layers", "1", "--batch-size", "4", "--epochs", "2",
        "--entity-negatives", "2", "--relation-negatives", "2", "--keep-prob", "1.0",
    )
    assert code == 0, err
    return prep / "dataset.dskg", out / "checkpoint.dskg"


class TestPrepare:
    def test_stats_and_cache(self, tiny_dir, tmp_path, capsys):
        out = tmp_path / "prep"
        code, stdout, _ = run_cli(
            capsys, "prepare", "--train", str(tiny_dir / "train.txt"),
            "--valid", str(tiny_dir / "valid.txt"), "--test", str(tiny_dir / "test.txt"),
            "--out", str(out),
        )
        assert code == 0
        assert "entities=3" in stdout
        assert "relations=2" in stdout
        assert "relations_with_reverse=4" in stdout
        assert "train=5" in stdout and "valid=1" in stdout and "test=1" in stdout
        assert "train_sequences=10" in stdout
        dataset = data.load_dataset(out / "dataset.dskg")
        assert dataset.num_raw_train == 5
        assert (out / "stats.txt").exists()
        assert (out / "config.resolved").exists()

    def test_missing_file_is_one_line_error(self, tiny_dir, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "prepare", "--train", str(tiny_dir / "absent.txt"),
            "--valid", str(tiny_dir / "valid.txt"), "--test", str(tiny_dir / "test.txt"),
            "--out", str(tmp_path / "prep"),
        )
        assert code == 1
        lines = err.strip().split("\n")
        assert len(lines) == 1
        kind, name, message = lines[0].split("\t", 2)
        assert kind == "error" and name == "FileNotFoundError"
        assert "absent.txt" in message

    def test_parse_error_carries_file_and_line(self, tmp_path, capsys):
        bad = tmp_path / "train.txt"
        bad.write_text("a\tp\n", encoding="utf-8")
        code, _, err = run_cli(
            capsys, "prepare", "--train", str(bad), "--valid", str(bad),
            "--test", str(bad), "--out", str(tmp_path / "prep"),
        )
        assert code == 1
        assert "line 1" in err
        assert "train.txt" in err


class TestGenToy:
    def test_files_and_determinism(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            code, stdout, _ = run_cli(
                capsys, "gen-toy", "--out", str(out),
                "--entities", "30", "--chains", "20", "--extra-pairs", "10",
            )
            assert code == 0
            assert "train=" in stdout
        assert (a / "train.txt").read_bytes() == (b / "train.txt").read_bytes()
        assert (a / "test.txt").read_bytes() == (b / "test.txt").read_bytes()


class TestTrain:
    def test_defaults_echoed(self, tiny_dir, tmp_path, capsys):
        out = tmp_path / "run"
        code, _, _ = run_cli(
            capsys, "train", "--data", str(tiny_dir), "--out", str(out), "--epochs", "0"
        )
        assert code == 0
        resolved = dict(
            line.split("=", 1) for line in (out / "config.resolved").read_text().split()
        )
        assert resolved["learning_rate"] == "0.001"
        assert resolved["embed_dim"] == "512"
        assert resolved["batch_size"] == "2048"
        assert resolved["keep_prob"] == "0.5"
        assert resolved["layers"] == "2"
        assert resolved["arch"] == "dskg"

    def test_variant_flags_override(self, tiny_dir, tmp_path, capsys):
        out = tmp_path / "run"
        code, _, _ = run_cli(
            capsys, "train", "--data", str(tiny_dir), "--out", str(out),
            "--epochs", "0", "--arch", "shared-4", "--layers", "4",
        )
        assert code == 0
        resolved = (out / "config.resolved").read_text()
        assert "arch=shared-4" in resolved and "layers=4" in resolved

    def test_config_file_env_and_flag_precedence(self, tiny_dir, tmp_path, capsys, monkeypatch):
        config_file = tmp_path / "run.conf"
        config_file.write_text("embed_dim = 16\nlayers = 1\nseed = 5\n", encoding="utf-8")
        monkeypatch.setenv("DSKG_LAYERS", "2")
        out = tmp_path / "run"
        code, _, _ = run_cli(
            capsys, "train", "--data", str(tiny_dir), "--out", str(out),
            "--config", str(config_file), "--epochs", "0", "--seed", "9",
        )
        assert code == 0
        resolved = dict(
            line.split("=", 1) for line in (out / "config.resolved").read_text().split()
        )
        assert resolved["embed_dim"] == "16"  # file beats default
        assert resolved["layers"] == "2"      # env beats file
        assert resolved["seed"] == "9"        # flag beats env

    def test_training_writes_checkpoint_and_log(self, trained):
        _, checkpoint = trained
        assert checkpoint.exists()
        log = checkpoint.parent / "train.log"
        lines = log.read_text().strip().split("\n")
        assert len(lines) == 2
        assert all(len(line.split("\t")) == 5 for line in lines)


class TestEval:
    def test_four_reports(self, trained, tmp_path, capsys):
        dataset, checkpoint = trained
        out = tmp_path / "reports"
        code, stdout, err = run_cli(
            capsys, "eval", "--checkpoint", str(checkpoint), "--data", str(dataset),
            "--out", str(out),
        )
        assert code == 0, err
        for name in ("entity_plain", "entity_enhanced", "cascade_plain", "cascade_enhanced"):
            text = (out / f"{name}.report").read_text()
            assert "hits@1=" in text and "mrr=" in text
            assert name in stdout

    def test_reports_byte_identical_across_runs(self, trained, tmp_path, capsys):
        dataset, checkpoint = trained
        one, two = tmp_path / "r1", tmp_path / "r2"
        for out in (one, two):
            code, _, _ = run_cli(
                capsys, "eval", "--checkpoint", str(checkpoint), "--data", str(dataset),
                "--out", str(out), "--dump-ranks",
            )
            assert code == 0
        for name in ("entity_plain", "entity_enhanced", "cascade_plain", "cascade_enhanced"):
            assert (one / f"{name}.report").read_bytes() == (two / f"{name}.report").read_bytes()
            assert (one / f"{name}.ranks.tsv").read_bytes() == (two / f"{name}.ranks.tsv").read_bytes()

    def test_ranks_dump_format(self, trained, tmp_path, capsys):
        dataset, checkpoint = trained
        out = tmp_path / "reports"
        run_cli(capsys, "eval", "--checkpoint", str(checkpoint), "--data", str(dataset),
                "--out", str(out), "--dump-ranks")
        rows = (out / "cascade_plain.ranks.tsv").read_text().strip().split("\n")
        assert len(rows) == 2  # one test triple, both directions
        fields = rows[0].split("\t")
        assert len(fields) == 6
        assert fields[3] in ("tail", "head")
        assert fields[4].isdigit() and fields[5].isdigit()

    def test_checkpoint_vocab_mismatch(self, trained, tmp_path, capsys):
        _, checkpoint = trained
        other = tmp_path / "other"
        other.mkdir()
        (other / "train.txt").write_text("x\tr\ty\ny\tr\tz\nz\tr\tw\nw\tr\tx\n")
        (other / "valid.txt").write_text("x\tr\tz\n")
        (other / "test.txt").write_text("y\tr\tw\n")
        code, _, err = run_cli(
            capsys, "eval", "--checkpoint", str(checkpoint), "--data", str(other),
            "--out", str(tmp_path / "r"),
        )
        assert code == 1
        assert "mismatch" in err


class TestPredictTriples:
    def test_outputs_and_formats(self, trained, tmp_path, capsys):
        dataset, checkpoint = trained
        out = tmp_path / "pred"
        code, stdout, err = run_cli(
            capsys, "predict-triples", "--checkpoint", str(checkpoint),
            "--data", str(dataset), "--out", str(out),
            "--stage1-window", "6", "--stage2-window", "10",
        )
        assert code == 0, err
        predictions = (out / "predictions.tsv").read_text().strip().split("\n")
        assert len(predictions) == 10
        assert all(len(line.split("\t")) == 4 for line in predictions)
        scores = [float(line.split("\t")[3]) for line in predictions]
        assert scores == sorted(scores, reverse=True)
        curve_rows = (out / "curve.tsv").read_text().strip().split("\n")
        assert curve_rows[0] == "n\tn_corr\tn_pred\tn_error\tp_n"
        assert "triples=10" in stdout

    def test_rerun_byte_identical(self, trained, tmp_path, capsys):
        dataset, checkpoint = trained
        one, two = tmp_path / "p1", tmp_path / "p2"
        for out in (one, two):
            code, _, _ = run_cli(
                capsys, "predict-triples", "--checkpoint", str(checkpoint),
                "--data", str(dataset), "--out", str(out),
                "--stage1-window", "5", "--stage2-window", "8",
            )
            assert code == 0
        assert (one / "predictions.tsv").read_bytes() == (two / "predictions.tsv").read_bytes()
        assert (one / "curve.tsv").read_bytes() == (two / "curve.tsv").read_bytes()


class TestAuditInverse:
    def test_stdout_report(self, tmp_path, capsys):
        (tmp_path / "train.txt").write_text(
            "a\tcontains\tb\nb\tpart_of\tc\nc\tcontainedby\tb\n"
        )
        (tmp_path / "valid.txt").write_text("a\tcontains\tc\n")
        (tmp_path / "test.txt").write_text("b\tcontainedby\ta\n")
        code, stdout, _ = run_cli(capsys, "audit-inverse", "--data", str(tmp_path))
        assert code == 0
        row = stdout.strip().split("\n")[0].split("\t")
        assert row[0] == "contains" and row[1] == "containedby"
        assert row[2] == "1" and float(row[3]) == 1.0

    def test_file_output(self, tmp_path, capsys):
        write_tiny_splits(tmp_path)
        out_file = tmp_path / "audit.tsv"
        code, stdout, _ = run_cli(
            capsys, "audit-inverse", "--data", str(tmp_path), "--out", str(out_file)
        )
        assert code == 0
        assert out_file.exists()
        assert "pairs=" in stdout


class TestConfigHelpers:
    def test_parse_config_file(self, tmp_path):
        path = tmp_path / "c.conf"
        path.write_text("# comment\nalpha = 0.5\n\nbeta=2\n", encoding="utf-8")
        assert parse_config_file(path) == {"alpha": "0.5", "beta": "2"}

    def test_bad_line_rejected(self, tmp_path):
        path = tmp_path / "c.conf"
        path.write_text("just words\n", encoding="utf-8")
        with pytest.raises(ValueError):
            parse_config_file(path)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "c.conf"
        path.write_text("bogus = 1\n", encoding="utf-8")
        with pytest.raises(ValueError, match="bogus"):
            resolve_options({"real": 1}, {"real": int}, config_file=path)

    def test_bool_coercion_from_env(self, monkeypatch):
        monkeypatch.setenv("DSKG_FLAG", "off")
        merged = resolve_options({"flag": True}, {"flag": bool})
        assert merged["flag"] is False

    def test_write_resolved_sorted(self, tmp_path):
        path = tmp_path / "config.resolved"
        write_resolved({"b": 2, "a": 1}, path)
        assert path.read_text() == "a=1\nb=2\n"


class TestUsageErrors:
    def test_unknown_command(self, capsys):
        code, _, err = run_cli(capsys, "frobnicate")
        assert code == 2

    def test_no_command(self, capsys):
        code, _, _ = run_cli(capsys)
        assert code == 2
