import csv
import io
import json
from pathlib import Path

import pytest

from npmle.cli import main, read_data

pytestmark = pytest.mark.filterwarnings("ignore:n=.*sample-size premise:RuntimeWarning")


def write(path: Path, text: str) -> str:
    path.write_text(text)
    return str(path)


def test_read_data_skips_comments(tmp_path: Path) -> None:
    f = write(tmp_path / "x.txt", "# header\n-0.8\n\n0.8  # trailing\n")
    assert read_data(f).points.tolist() == [-0.8, 0.8]


def test_solve_proved_exit_zero(tmp_path: Path) -> None:
    data = write(tmp_path / "x.txt", "-2\n2\n")
    out = tmp_path / "cert.json"
    mix = tmp_path / "mix.json"
    assert main(["solve", "--input", data, "--out", str(out), "--mixture-out", str(mix)]) == 0
    doc = json.loads(out.read_text())
    assert doc["status"] == "Proved" and doc["support_count"] == 2
    assert doc["shub_smale"]["proved"] is True
    assert len(json.loads(mix.read_text())["locations"]) == 2


def test_solve_inconclusive_exit_two(tmp_path: Path) -> None:
    data = write(tmp_path / "x.txt", "0\n1\n2.5\n5\n")
    out = tmp_path / "cert.json"
    assert main(["solve", "--input", data, "--max-refine", "1", "--out", str(out)]) == 2
    assert json.loads(out.read_text())["support_count"] is None


def test_solve_static(tmp_path: Path) -> None:
    data = write(tmp_path / "x.txt", "-0.8\n0.8\n")
    S = write(tmp_path / "s.txt", "-0.8\n0\n0.8\n")
    out = tmp_path / "cert.json"
    assert main(["solve", "--input", data, "--static-support", S, "--out", str(out)]) == 0
    assert json.loads(out.read_text())["support_count"] == 1


def test_certify(tmp_path: Path) -> None:
    data = write(tmp_path / "x.txt", "-0.8\n0.8\n")
    good = write(tmp_path / "c.json", json.dumps({"weights": [1.0], "locations": [0.0]}))
    out = tmp_path / "cert.json"
    assert main(["certify", "--input", data, "--candidate", good, "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["status"] == "Proved" and doc["lambda"] is None
    wide = write(tmp_path / "w.txt", "-1.5\n1.5\n")
    assert main(["certify", "--input", wide, "--candidate", good, "--out", str(out)]) == 2
    assert json.loads(out.read_text())["w1_bound"] is None


def test_em_and_newton(tmp_path: Path) -> None:
    data = write(tmp_path / "x.txt", "-2\n2\n")
    start = write(tmp_path / "s.json", json.dumps({"weights": [0.5, 0.5], "locations": [-1.9, 1.9]}))
    out = tmp_path / "o.json"
    assert main(["newton", "--input", data, "--start", start, "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["failed"] is False
    assert doc["final"]["locations"][1] == pytest.approx(1.998651346, abs=1e-8)
    assert main(["em", "--input", data, "--start", start, "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["monotone"] is True
    assert doc["spectral_radius"] < 1


def test_sample_and_harness(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    out = tmp_path / "x.txt"
    assert main(["sample", "--spec", "uniform[-1,1]", "--n", "7", "--seed", "3", "--out", str(out)]) == 0
    assert len(read_data(out).points) == 7
    assert main(["sample", "--clustered", "2", "--n", "5", "--spread", "0.05", "--out", str(out)]) == 0
    assert len(read_data(out).points) == 10
    table = tmp_path / "t.csv"
    code = main(["harness", "--spec", "uniform[-1,1]", "--n", "20", "--trials", "2", "--out", str(table)])
    assert code in (0, 2)
    rows = list(csv.DictReader(io.StringIO(table.read_text())))
    assert len(rows) == 2 and "A_hat" in rows[0]
    assert "all_certified" in json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_usage_and_io_errors(tmp_path: Path) -> None:
    assert main([]) == 1
    assert main(["solve"]) == 1
    assert main(["solve", "--input", str(tmp_path / "missing.txt")]) == 1
    empty = write(tmp_path / "e.txt", "# nothing\n")
    assert main(["solve", "--input", empty]) == 1
    data = write(tmp_path / "x.txt", "0\n")
    bad = write(tmp_path / "bad.json", "{\"weights\": [1.0]}")
    assert main(["certify", "--input", data, "--candidate", bad]) == 1
    assert main(["sample", "--spec", "nope", "--n", "3"]) == 1
