import numpy as np
import pandas as pd
import pytest

from cli import EXIT_INPUT, EXIT_OK, EXIT_UNSUPPORTED, main
from sketch_io import StreamFile, load_sketch, write_csv_stream, write_stream
from svm_pointquery import SvmBuilder


def _circle(rng, n):
    theta = rng.uniform(0, 2 * np.pi, n)
    return np.column_stack([np.cos(theta), np.sin(theta)]) * rng.uniform(0.5, 1.0, (n, 1))


def _values(capsys) -> dict:
    out = capsys.readouterr().out
    return dict(line.split("=", 1) for line in out.strip().splitlines())


@pytest.fixture
def rows_csv(tmp_path):
    path = tmp_path / "rows.csv"
    write_csv_stream(path, _circle(np.random.default_rng(0), 1_500))
    return path


@pytest.fixture
def rows_bin(tmp_path):
    path = tmp_path / "rows.lpss"
    write_stream(path, _circle(np.random.default_rng(1), 1_500), 1.0)
    return path


class TestBuildAndQuery:
    def test_build_then_query(self, tmp_path, rows_csv, capsys):
        out = tmp_path / "sketch.json"
        code = main(["build", "--input", str(rows_csv), "--p", "1", "--eps", "0.1", "--seed", "3", "--out", str(out)])
        assert code == EXIT_OK
        built = _values(capsys)
        assert built["kind"] == "coreset"
        assert int(built["size"]) < 1_500

        assert main(["query", "--sketch", str(out), "--x", "0.6,0.8"]) == EXIT_OK
        values = _values(capsys)
        assert float(values["estimate"]) > 0
        assert float(values["additive_bound"]) >= 0
        assert values["multiplicative"] == "False"

    def test_same_seed_same_file(self, tmp_path, rows_csv):
        first, second = tmp_path / "a.json", tmp_path / "b.json"
        for out in (first, second):
            main(["build", "--input", str(rows_csv), "--p", "1", "--eps", "0.1", "--seed", "5", "--out", str(out)])
        assert first.read_bytes() == second.read_bytes()

    def test_affine_query_takes_offset(self, tmp_path, rows_bin, capsys):
        out = tmp_path / "affine.json"
        assert main(["build", "--input", str(rows_bin), "--eps", "0.1", "--affine", "--out", str(out)]) == EXIT_OK
        capsys.readouterr()
        assert main(["query", "--sketch", str(out), "--x", "0.6,0.8", "--b", "0.2"]) == EXIT_OK
        assert float(_values(capsys)["estimate"]) > 0

    def test_offset_on_plain_sketch(self, tmp_path, rows_bin, capsys):
        out = tmp_path / "sketch.json"
        main(["build", "--input", str(rows_bin), "--eps", "0.1", "--out", str(out)])
        assert main(["query", "--sketch", str(out), "--x", "0.6,0.8", "--b", "0.2"]) == EXIT_INPUT
        assert "error=" in capsys.readouterr().err

    def test_csv_without_p(self, tmp_path, rows_csv, capsys):
        code = main(["build", "--input", str(rows_csv), "--eps", "0.1", "--out", str(tmp_path / "s.json")])
        assert code == EXIT_INPUT

    def test_bad_eps(self, tmp_path, rows_bin):
        assert main(["build", "--input", str(rows_bin), "--eps", "1.5", "--out", str(tmp_path / "s.json")]) == EXIT_INPUT

    def test_missing_input(self, tmp_path):
        code = main(["build", "--input", str(tmp_path / "absent.csv"), "--p", "1", "--eps", "0.1", "--out", "x.json"])
        assert code == EXIT_INPUT

    def test_malformed_direction(self, tmp_path, rows_bin):
        out = tmp_path / "sketch.json"
        main(["build", "--input", str(rows_bin), "--eps", "0.1", "--out", str(out)])
        assert main(["query", "--sketch", str(out), "--x", "0.6,abc"]) == EXIT_INPUT


class TestStream:
    @pytest.mark.parametrize("algo", ["mr", "sens", "fourier"])
    def test_algorithms(self, tmp_path, rows_bin, capsys, algo):
        out = tmp_path / f"{algo}.json"
        code = main(["stream", "--input", str(rows_bin), "--algo", algo, "--eps", "0.2", "--seed", "1", "--out", str(out)])
        assert code == EXIT_OK
        values = _values(capsys)
        assert values["algo"] == algo
        assert int(values["rows"]) == 1_500
        if algo == "mr":
            assert values["oversized"] == "0"
        document, _ = load_sketch(out)
        assert document.params["algo"] == algo

    def test_region_counters(self, tmp_path, rows_bin, capsys):
        out = tmp_path / "region.json"
        args = ["stream", "--input", str(rows_bin), "--algo", "region", "--eps", "0.2", "--replicas", "3", "--out", str(out)]
        assert main(args) == EXIT_OK
        values = _values(capsys)
        assert int(values["replicas"]) == 3
        assert int(values["tensor_slots"]) > 0
        assert main(["query", "--sketch", str(out), "--x", "1,0"]) == EXIT_OK
        assert float(_values(capsys)["estimate"]) > 0

    def test_region_needs_integer_p(self, tmp_path, capsys):
        path = tmp_path / "rows.lpss"
        write_stream(path, _circle(np.random.default_rng(2), 50), 1.5)
        args = ["stream", "--input", str(path), "--algo", "region", "--eps", "0.2", "--out", str(tmp_path / "r.json")]
        assert main(args) == EXIT_INPUT

    def test_region_rejects_weights(self, tmp_path):
        path = tmp_path / "rows.lpss"
        rng = np.random.default_rng(3)
        write_stream(path, _circle(rng, 50), 1.0, weights=rng.uniform(0.5, 2.0, 50))
        args = ["stream", "--input", str(path), "--algo", "region", "--eps", "0.2", "--out", str(tmp_path / "r.json")]
        assert main(args) == EXIT_INPUT

    def test_fourier_needs_plane(self, tmp_path):
        path = tmp_path / "rows.lpss"
        write_stream(path, np.random.default_rng(4).standard_normal((50, 3)), 1.0)
        args = ["stream", "--input", str(path), "--algo", "fourier", "--eps", "0.2", "--out", str(tmp_path / "f.json")]
        assert main(args) == EXIT_INPUT

    def test_tight_region_dimension(self, tmp_path):
        path = tmp_path / "rows.lpss"
        write_stream(path, np.random.default_rng(5).standard_normal((50, 5)), 1.0)
        args = ["stream", "--input", str(path), "--algo", "region-tight", "--eps", "0.2", "--out", str(tmp_path / "r.json")]
        assert main(args) == EXIT_UNSUPPORTED

    def test_empty_stream(self, tmp_path):
        path = tmp_path / "rows.lpss"
        write_stream(path, np.empty((0, 2)), 1.0)
        args = ["stream", "--input", str(path), "--algo", "mr", "--eps", "0.2", "--out", str(tmp_path / "m.json")]
        assert main(args) == EXIT_INPUT


class TestSvm:
    def test_build_then_query(self, tmp_path, capsys):
        rng = np.random.default_rng(6)
        X = _circle(rng, 1_000) * 0.9
        path = tmp_path / "labelled.csv"
        write_csv_stream(path, X, labels=np.where(X[:, 1] > 0, 1, -1))
        out = tmp_path / "svm.json"
        assert main(["svm", "build", "--input", str(path), "--eps", "0.2", "--lam", "0.1", "--out", str(out)]) == EXIT_OK
        built = _values(capsys)
        assert int(built["positives"]) + int(built["negatives"]) == 1_000
        assert main(["svm", "query", "--sketch", str(out), "--theta", "0.1,0.2", "--b", "0.3"]) == EXIT_OK
        assert float(_values(capsys)["estimate"]) > 0

    def test_rows_are_ingested_as_they_are_read(self, tmp_path, monkeypatch):
        rng = np.random.default_rng(7)
        X = _circle(rng, 50) * 0.9
        path = tmp_path / "labelled.csv"
        write_csv_stream(path, X, labels=np.where(X[:, 0] > 0, 1, -1))
        pulled, pulled_at_ingest = [], []
        read_rows, ingest = StreamFile.rows, SvmBuilder.ingest

        def counting_rows(stream):
            for row in read_rows(stream):
                pulled.append(row)
                yield row

        def recording_ingest(builder, x, y):
            pulled_at_ingest.append(len(pulled))
            return ingest(builder, x, y)

        monkeypatch.setattr(StreamFile, "rows", counting_rows)
        monkeypatch.setattr(SvmBuilder, "ingest", recording_ingest)
        assert main(["svm", "build", "--input", str(path), "--eps", "0.2", "--out", str(tmp_path / "svm.json")]) == EXIT_OK
        assert pulled_at_ingest == list(range(1, 51))

    def test_unlabelled_stream(self, tmp_path, rows_bin):
        assert main(["svm", "build", "--input", str(rows_bin), "--eps", "0.2", "--out", str(tmp_path / "s.json")]) == EXIT_INPUT

    def test_query_needs_svm_sketch(self, tmp_path, rows_bin):
        out = tmp_path / "sketch.json"
        main(["build", "--input", str(rows_bin), "--eps", "0.1", "--out", str(out)])
        assert main(["svm", "query", "--sketch", str(out), "--theta", "0.1,0.2"]) == EXIT_INPUT


class TestExperiment:
    def test_lambda_report(self, tmp_path, capsys):
        out = tmp_path / "report.csv"
        assert main(["experiment", "lambda", "--d", "2", "--p", "1", "--k-max", "10", "--out", str(out)]) == EXIT_OK
        report = pd.read_csv(out)
        assert len(report) == 11
        assert report["lambda_k"].iloc[0] == pytest.approx(2 / np.pi)
        assert _values(capsys)["rows"] == "11"

    def test_unknown_name(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["experiment", "nope", "--out", str(tmp_path / "r.csv")])

    def test_bad_log_level(self, tmp_path):
        assert main(["--log-level", "LOUD", "experiment", "lambda", "--out", str(tmp_path / "r.csv")]) == EXIT_INPUT
