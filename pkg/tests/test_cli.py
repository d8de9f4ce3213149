import io
import itertools

import pytest

from idsplit.cli import main

WORDS = [
    "get", "set", "name", "hash", "file", "read", "write", "lock",
    "index", "count", "list", "node", "parse", "token", "split", "merge",
]


@pytest.fixture
def source_tree(tmp_path):
    """A small fake checkout with deterministic compound identifiers."""
    src = tmp_path / "checkout"
    src.mkdir()
    pairs = list(itertools.product(WORDS, WORDS))[:150]
    lines = [f"int {a}_{b} = {a}{b.capitalize()}2;" for a, b in pairs]
    (src / "main.c").write_text("\n".join(lines[:75]) + "\n")
    (src / "util.py").write_text("\n".join(lines[75:]) + "\n")
    (src / "ignored.dat").write_text("binary_like_stuff\n")
    return src


@pytest.fixture
def dataset_file(source_tree, tmp_path):
    out = tmp_path / "data.tsv"
    rc = main(["extract", str(source_tree), "--out", str(out), "--seed", "1"])
    assert rc == 0
    return out


class TestExtract:
    def test_end_to_end_counts(self, source_tree, tmp_path, capsys):
        out = tmp_path / "data.tsv"
        rc = main(["extract", str(source_tree), "--out", str(out)])
        assert rc == 0
        printed = capsys.readouterr().out
        assert "identifiers extracted" in printed
        assert "unique records" in printed
        lines = out.read_text().splitlines()
        assert lines == sorted(lines)
        assert all("\t" in line for line in lines)

    def test_single_file_record(self, tmp_path, capsys):
        src = tmp_path / "one.py"
        src.write_text("int fooBar;\n")
        out = tmp_path / "data.tsv"
        assert main(["extract", str(src), "--out", str(out)]) == 0
        assert out.read_text() == "foobar\tfoo bar\n"

    def test_rerun_is_byte_identical(self, source_tree, tmp_path):
        out1 = tmp_path / "a.tsv"
        out2 = tmp_path / "b.tsv"
        assert main(["extract", str(source_tree), "--out", str(out1)]) == 0
        assert main(["extract", str(source_tree), "--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_no_identifiers_is_data_error(self, tmp_path, capsys):
        src = tmp_path / "empty"
        src.mkdir()
        (src / "no_code.py").write_text("123 456\n")
        rc = main(["extract", str(src), "--out", str(tmp_path / "x.tsv")])
        assert rc == 2
        assert not (tmp_path / "x.tsv").exists()

    def test_missing_input_is_data_error(self, tmp_path):
        rc = main(["extract", str(tmp_path / "nope"), "--out", str(tmp_path / "x.tsv")])
        assert rc == 2

    def test_extension_filter(self, tmp_path, capsys):
        src = tmp_path / "tree"
        src.mkdir()
        (src / "a.py").write_text("int fooBar;\n")
        (src / "b.weird").write_text("int bazQux;\n")
        out = tmp_path / "d.tsv"
        assert main(["extract", str(src), "--out", str(out), "--ext", "weird"]) == 0
        assert out.read_text() == "bazqux\tbaz qux\n"


class TestTrain:
    def test_lm_container(self, dataset_file, tmp_path, capsys):
        out = tmp_path / "lm.bin"
        rc = main([
            "train", "--dataset", str(dataset_file), "--model", "lm-and",
            "--depth", "11", "--out", str(out),
        ])
        assert rc == 0
        assert out.read_bytes().startswith(b"IDLMC1 mode=and\n")
        assert out.read_bytes().count(b"IDLM1 ") == 2  # forward + backward blocks

    def test_dp_posterior(self, dataset_file, tmp_path):
        out = tmp_path / "dp.tsv"
        rc = main([
            "train", "--dataset", str(dataset_file), "--model", "dp-posterior",
            "--out", str(out),
        ])
        assert rc == 0
        assert out.read_text().startswith("IDDP1 mode=posterior")

    def test_dp_mode_conflict_is_usage_error(self, dataset_file, tmp_path):
        rc = main([
            "train", "--dataset", str(dataset_file), "--model", "dp-posterior",
            "--mode", "zipf", "--out", str(tmp_path / "dp.tsv"),
        ])
        assert rc == 1

    def test_dp_from_frequency_file(self, tmp_path):
        freq = tmp_path / "wiki.tsv"
        freq.write_text("foo\t10\nbar\t5\n")
        out = tmp_path / "dp.tsv"
        rc = main([
            "train", "--model", "dp-posterior", "--freq-file", str(freq),
            "--out", str(out),
        ])
        assert rc == 0
        assert "foo\t10" in out.read_text()

    def test_bilstm_epoch_log(self, dataset_file, tmp_path, capsys):
        out = tmp_path / "nn.bin"
        rc = main([
            "train", "--dataset", str(dataset_file), "--model", "bilstm",
            "--hidden", "4", "--epochs", "2", "--batch-size", "16",
            "--seed", "7", "--out", str(out),
        ])
        assert rc == 0
        log_lines = [l for l in capsys.readouterr().out.splitlines() if l]
        assert len(log_lines) == 2
        for i, line in enumerate(log_lines, start=1):
            epoch, train_loss, val_f1 = line.split("\t")
            assert int(epoch) == i
            float(train_loss), float(val_f1)
        assert out.exists()

    def test_zero_epochs_warns_and_writes(self, dataset_file, tmp_path, capsys):
        out = tmp_path / "nn.bin"
        rc = main([
            "train", "--dataset", str(dataset_file), "--model", "bigru",
            "--hidden", "4", "--epochs", "0", "--out", str(out),
        ])
        assert rc == 0
        assert "untrained" in capsys.readouterr().err
        assert out.exists()

    def test_missing_dataset_flag_is_usage_error(self, tmp_path):
        rc = main(["train", "--model", "bilstm", "--out", str(tmp_path / "x.bin")])
        assert rc == 1

    def test_unknown_flag_rejected(self, dataset_file, tmp_path):
        rc = main([
            "train", "--dataset", str(dataset_file), "--model", "bilstm",
            "--out", str(tmp_path / "x.bin"), "--bogus",
        ])
        assert rc == 1


class TestExitCodes:
    def test_internal_fault_maps_to_3(self, monkeypatch, capsys):
        import idsplit.cli as cli

        def boom(args):
            raise RuntimeError("synthetic fault")

        monkeypatch.setitem(cli._COMMANDS, "split", boom)
        assert main(["split", "--heuristic-only", "x"]) == 3
        assert "internal error" in capsys.readouterr().err


class TestThreadCap:
    def test_env_override(self, monkeypatch):
        from idsplit.cli import thread_cap

        monkeypatch.setenv("IDSPLIT_THREADS", "3")
        assert thread_cap() == 3

    def test_invalid_value_falls_back(self, monkeypatch):
        from idsplit.cli import thread_cap

        monkeypatch.setenv("IDSPLIT_THREADS", "lots")
        assert thread_cap() >= 1


class TestSplit:
    def test_heuristic_only(self, capsys):
        rc = main(["split", "--heuristic-only", "foo_bar", "FooBaz"])
        assert rc == 0
        assert capsys.readouterr().out == "foo bar\nfoo baz\n"

    def test_stdin_lines(self, capsys, monkeypatch):
        monkeypatch.setattr("sys.stdin", io.StringIO("namehash_from_uid\n"))
        rc = main(["split", "--heuristic-only"])
        assert rc == 0
        assert capsys.readouterr().out == "namehash from uid\n"

    def test_empty_stdin(self, capsys, monkeypatch):
        monkeypatch.setattr("sys.stdin", io.StringIO(""))
        rc = main(["split", "--heuristic-only"])
        assert rc == 0
        assert capsys.readouterr().out == ""

    def test_model_refines_heuristic_parts(self, dataset_file, tmp_path, capsys):
        model = tmp_path / "dp.tsv"
        assert main([
            "train", "--dataset", str(dataset_file), "--model", "dp-posterior",
            "--out", str(model),
        ]) == 0
        capsys.readouterr()
        rc = main(["split", "--model", str(model), "getname", "get_name"])
        assert rc == 0
        assert capsys.readouterr().out == "get name\nget name\n"

    def test_no_model_is_usage_error(self):
        assert main(["split", "foobar"]) == 1

    def test_missing_model_file_is_data_error(self, tmp_path):
        assert main(["split", "--model", str(tmp_path / "nope.bin"), "x"]) == 2


class TestEvaluate:
    @pytest.fixture
    def models(self, dataset_file, tmp_path, capsys):
        lm = tmp_path / "lm.bin"
        dp = tmp_path / "dp.tsv"
        assert main([
            "train", "--dataset", str(dataset_file), "--model", "lm-or",
            "--out", str(lm),
        ]) == 0
        assert main([
            "train", "--dataset", str(dataset_file), "--model", "dp-posterior",
            "--out", str(dp),
        ]) == 0
        capsys.readouterr()
        return lm, dp

    def test_table_sorted_by_f1(self, dataset_file, models, capsys):
        lm, dp = models
        rc = main([
            "evaluate", str(lm), str(dp), "--dataset", str(dataset_file),
            "--seed", "1",
        ])
        assert rc == 0
        out = capsys.readouterr().out
        lines = out.splitlines()
        assert lines[0].split()[:2] == ["Model", "Precision"]
        assert len(lines) == 3
        f1s = [float(line.split()[-1]) for line in lines[1:]]
        assert f1s == sorted(f1s, reverse=True)

    def test_heuristic_self_consistency(self, dataset_file, capsys):
        rc = main(["evaluate", "heuristic", "--dataset", str(dataset_file), "--seed", "1"])
        assert rc == 0
        table = capsys.readouterr().out
        row = table.splitlines()[1]
        assert row.split() == ["heuristic", "1.000", "1.000", "1.000"]

    def test_emit_plot_and_metrics(self, dataset_file, models, tmp_path, capsys):
        lm, dp = models
        plot = tmp_path / "plot.tsv"
        metrics = tmp_path / "metrics.tsv"
        rc = main([
            "evaluate", str(lm), str(dp), "--dataset", str(dataset_file),
            "--seed", "1", "--emit-plot", str(plot), "--emit-metrics", str(metrics),
        ])
        assert rc == 0
        assert plot.read_text().startswith("kind\tlabel")
        assert "isocurve\t0.8" in plot.read_text()
        assert metrics.read_text().startswith("model\tprecision")

    def test_vocab_reduction_reported(self, dataset_file, models, capsys):
        lm, _ = models
        rc = main([
            "evaluate", str(lm), "--dataset", str(dataset_file), "--seed", "1",
            "--vocab-reduction",
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert any(line.startswith("vocab-reduction\tlm-or\t") for line in out.splitlines())

    def test_stdout_is_deterministic(self, dataset_file, models, capsys):
        lm, dp = models

        def run():
            rc = main([
                "evaluate", str(lm), str(dp), "--dataset", str(dataset_file),
                "--seed", "1",
            ])
            assert rc == 0
            return capsys.readouterr().out

        assert run() == run()

    def test_missing_dataset_is_data_error(self, models, tmp_path):
        lm, _ = models
        rc = main(["evaluate", str(lm), "--dataset", str(tmp_path / "nope.tsv")])
        assert rc == 2
