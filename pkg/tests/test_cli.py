"""The ``ibf-bench`` command line."""

import csv
import io
import subprocess
import sys

import pytest

import ibf.cli as cli
from ibf.bench import CSV_FIELDS
from ibf.errors import AccuracyError


def test_stdout_csv(capsys):
    assert cli.main(["--transform", "nufft1d", "--n", "256", "--cheb", "6"]) == 0
    out = capsys.readouterr().out
    rows = list(csv.DictReader(io.StringIO(out)))
    assert out.splitlines()[0] == ",".join(CSV_FIELDS)
    assert len(rows) == 1 and float(rows[0]["eps"]) <= 5e-3


def test_multiple_sizes_to_file(tmp_path, capsys):
    out = tmp_path / "r.csv"
    rc = cli.main(["--transform", "fio1d", "--n", "64", "128", "--cheb", "4", "5", "--out", str(out),
                   "--stage", "sweepout", "--seed", "2"])
    assert rc == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 4 and {r["stage"] for r in rows} == {"swept_out"}
    assert "fio1d N=64" in capsys.readouterr().out


def test_save_and_load(tmp_path, capsys):
    p = str(tmp_path / "plan.ibf")
    assert cli.main(["--transform", "fio1d", "--n", "256", "--save", p]) == 0
    a = capsys.readouterr().out
    assert cli.main(["--transform", "fio1d", "--n", "256", "--load", p]) == 0
    b = capsys.readouterr().out
    ra, rb = next(csv.DictReader(io.StringIO(a))), next(csv.DictReader(io.StringIO(b)))
    assert ra["eps"] == rb["eps"] and ra["nnz_opt"] == rb["nnz_opt"]


@pytest.mark.parametrize("argv", [
    ["--transform", "fft3d", "--n", "256"],
    ["--transform", "fio1d", "--n", "300"],
    ["--transform", "fio2d", "--n", "1000"],
    ["--transform", "fio1d", "--n", "256", "--stage", "final"],
    ["--transform", "fio1d", "--n", "256", "--tol", "-1"],
    ["--transform", "fio1d"],
    ["--transform", "fio1d", "--n", "256", "--load", "/nonexistent/plan.ibf"],
])
def test_config_errors_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        sys.exit(cli.main(argv))
    assert exc.value.code == 2


def test_corrupt_file_exit_2(tmp_path):
    p = tmp_path / "bad.ibf"
    p.write_bytes(b"NOPE" + bytes(40))
    assert cli.main(["--transform", "fio1d", "--n", "256", "--load", str(p)]) == 2


def test_accuracy_error_exit_3(monkeypatch):
    def boom(cfg):
        raise AccuracyError("exact sample vanished")

    monkeypatch.setattr(cli, "run_benchmark", boom)
    assert cli.main(["--transform", "fio1d", "--n", "64"]) == 3


def test_console_script_entry_point():
    r = subprocess.run(["ibf-bench", "--transform", "fio1d", "--n", "64", "--cheb", "4"],
                       capture_output=True, text=True, timeout=120)
    assert r.returncode == 0, r.stderr
    assert r.stdout.startswith("transform,N,d,q")
