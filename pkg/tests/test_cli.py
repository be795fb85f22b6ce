import json

import pytest

from stablegap.cli import parse_int_range, run
from stablegap.errors import ParameterError
from stablegap.io import read_csv


def test_range_syntax():
    assert parse_int_range("4..8") == [4, 5, 6, 7, 8]
    assert parse_int_range("4..64:20") == [4, 24, 44, 64]
    assert parse_int_range("3, 9,27") == [3, 9, 27]
    for bad in ("5..4", "", "a..b"):
        with pytest.raises(ParameterError):
            parse_int_range(bad)


def test_gap_sweep_csv(tmp_path):
    out = tmp_path / "sweep.csv"
    assert run(["gap-sweep", "--rate", "power", "--alpha", "1.0", "--n", "4..64", "-o", str(out)]) == 0
    header, rows = read_csv(out)
    assert abs(float(header["fit_slope"]) + 1.0) <= 0.10
    assert [int(r["n"]) for r in rows] == list(range(4, 65))
    assert "config_hash" in header and header["seed"]
    manifest = json.loads(out.with_name("sweep.csv.manifest.json").read_text())
    assert manifest["status"] == "ok" and "timings_s" in manifest


def test_outputs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["return-prob", "--times", "5,10", "--samples", "3000", "--seed", "11"]
    assert run(args + ["-o", str(a)]) == 0
    assert run(args + ["-o", str(b), "--workers", "3"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_json_mirror(tmp_path):
    out = tmp_path / "ex.json"
    assert run(["exclusion", "--n", "1..2", "--format", "json", "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["manifest"]["config_hash"]
    cols = set(doc["data"]["rows"][0])
    assert cols == {"n", "ell", "states", "gap", "normalized_gap", "method", "residual"}


def test_multiscale_theta(capsys):
    assert run(["multiscale", "--K", "2", "--alpha", "1.0"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["data"]["params"]["theta"] < 1 and doc["data"]["feasible"]


def test_compare_json(capsys):
    assert run(["compare", "--rate", "lacunary", "--alpha", "1", "--n-max", "2000", "--format", "json"]) == 0
    data = json.loads(capsys.readouterr().out)["data"]
    assert data["holds"] and data["certificate"]["label"] == "verified up to horizon"


def test_zero_range_case_note(capsys):
    assert run(["zero-range", "--n", "1", "--g", "indicator", "--ell", "1..3"]) == 0
    assert "# interaction_case: ii" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        ["gap-sweep", "--n", "5..4"],
        ["gap-sweep", "--n", "4", "--alpha", "2.5"],
        ["gap-sweep", "--n", "0..3"],
        ["return-prob", "--times", "10,5"],
        ["gap-sweep", "--n", "4", "--rate", "table"],
        ["zero-range", "--n", "1", "--g", "table"],
    ],
)
def test_validation_exit_code(argv, capsys):
    assert run(argv) == 2
    assert "invalid configuration" in capsys.readouterr().err


def test_field_named_in_diagnostic(capsys):
    run(["gap-sweep", "--n", "5..4"])
    assert "--n:" in capsys.readouterr().err


def test_partial_failure_exit(tmp_path, capsys):
    table = tmp_path / "rate.txt"
    table.write_text("1 0\n2 1\n")
    out = tmp_path / "x.csv"
    code = run(["exclusion", "--rate", "table", "--table", str(table), "--n", "1", "-o", str(out)])
    assert code == 3
    _, rows = read_csv(out)
    assert all(r["method"].startswith("failed:") for r in rows)


def test_verify_all_fault_injection(capsys):
    assert run(["verify-all", "--criteria", "8", "--inject-asymmetry"]) == 4
    cap = capsys.readouterr()
    # summary lines go to stderr when the JSON report occupies stdout
    assert "[FAIL] C8 detailed balance" in cap.err
    assert "walk with injected asymmetry" in json.loads(cap.out)["data"]["results"][1]["detail"]


def test_verify_all_subset_passes(capsys):
    assert run(["verify-all", "--criteria", "4,5"]) == 0
    first = capsys.readouterr()
    run(["verify-all", "--criteria", "4,5"])
    again = capsys.readouterr()
    assert (again.out, again.err) == (first.out, first.err)
    assert first.err.count("[PASS]") == 3
