import json

import pandas as pd
import pytest

from app import EXIT_FAILURE, EXIT_INPUT, EXIT_PASS, run
from services.errors import TargetError
from utils.run_config import RunConfig, load_fixtures, load_target


def _report(path):
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def test_solidarity_on_random_target(tmp_path):
    out = tmp_path / "solidarity.json"
    assert run(["solidarity", "random:3,[2,2,2],42", "--report", str(out)]) == EXIT_PASS
    report = _report(out)
    assert report["schema"] == "1"
    assert report["command"] == "solidarity"
    assert report["seed"] == 42
    assert report["passed"] is True and report["failures"] == []
    assert len(report["results"]["verdicts"]) == 3


def test_identical_runs_give_identical_reports(tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    args = ["spectra", "random:3,[2,3,2],7", "--mode", "mixture", "--seed", "11"]
    assert run(args + ["--report", str(first)]) == EXIT_PASS
    assert run(args + ["--report", str(second)]) == EXIT_PASS
    assert first.read_bytes() == second.read_bytes()


def test_malformed_json_target(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"sizes": [2, 2], "weights": [1, 2,')
    assert run(["spectra", str(bad)]) == EXIT_INPUT
    assert "malformed JSON" in capsys.readouterr().err


@pytest.mark.parametrize("payload, field_name", [
    ({"sizes": [2, 2]}, "weights"),
    ({"weights": [1, 1, 1, 1]}, "sizes"),
    ({"sizes": [2, 2], "weights": [1, 1, 1]}, "weights"),
    ({"sizes": [2, 2], "weights": "1,1,1,1"}, "weights"),
])
def test_invalid_target_names_the_field(tmp_path, capsys, payload, field_name):
    path = tmp_path / "target.json"
    path.write_text(json.dumps(payload))
    assert run(["two-component", str(path)]) == EXIT_INPUT
    assert field_name in capsys.readouterr().err


def test_missing_target_file(tmp_path):
    assert run(["spectra", str(tmp_path / "absent.json")]) == EXIT_INPUT


def test_unknown_command_is_rejected():
    with pytest.raises(SystemExit) as excinfo:
        run(["frobnicate"])
    assert excinfo.value.code == 2


def test_unknown_tolerance_is_an_input_error(capsys):
    assert run(["spectra", "fixture:rho-0.5", "--tol", "bogus=1"]) == EXIT_INPUT
    assert "bogus" in capsys.readouterr().err


def test_failed_check_exits_one_with_failure_list(tmp_path):
    out = tmp_path / "report.json"
    assert run(["spectra", "fixture:rho-0.5", "--tol", "spectral=-1", "--report", str(out)]) == EXIT_FAILURE
    report = _report(out)
    assert report["passed"] is False
    assert report["failures"]
    assert all(set(f) == {"name", "passed", "detail"} for f in report["failures"])


def test_spectra_tables_and_matrix_export(tmp_path):
    table, matrix = tmp_path / "eig.csv", tmp_path / "matrix.csv"
    code = run(["spectra", "fixture:rho-0.5", "--mode", "mixture", "--weights", "0.5,0.5",
                "--table", str(table), "--export-matrix", str(matrix), "--report", str(tmp_path / "r.json")])
    assert code == EXIT_PASS
    eigen = pd.read_csv(table)
    assert list(eigen.columns) == ["real", "imag", "modulus"]
    assert len(eigen) == 4
    assert pd.read_csv(matrix).shape == (4, 5)


def test_spectra_csv_format_writes_table_to_stdout(capsys):
    assert run(["spectra", "fixture:uniform", "--format", "csv"]) == EXIT_PASS
    assert capsys.readouterr().out.startswith("real,imag,modulus\n")


def test_collapse_check_with_partition(tmp_path):
    out = tmp_path / "collapse.json"
    code = run(["collapse-check", "fixture:markov-triple", "--subset", "1,3", "--partition", "1|2|3",
                "--inheritance", "--report", str(out)])
    assert code == EXIT_PASS
    results = _report(out)["results"]
    assert results["blocked_vs_collapsed"]["applicable"] is True
    assert set(results["collapsed"]) == {"cycle", "mixture"}
    assert results["collapsed_inheritance"]["passed"] is True


def test_two_component(tmp_path):
    out = tmp_path / "two.json"
    assert run(["two-component", "random:3,[2,3,2],5", "--split", "1,2", "--report", str(out)]) == EXIT_PASS
    assert _report(out)["results"]["two_component"]["passed"] is True


def test_example_trace_csv(tmp_path):
    trace = tmp_path / "trace.csv"
    code = run(["example", "--steps", "200", "--sampler", "both", "--out", str(trace), "--y", "1.5",
                "--report", str(tmp_path / "example.json")])
    assert code == EXIT_PASS
    for sampler_id in ("blockA", "blockB"):
        frame = pd.read_csv(tmp_path / f"trace_{sampler_id}.csv")
        assert list(frame.columns) == ["step", "u", "v", "w"]
        assert len(frame) == 201
        assert (frame["u"].iloc[1:] > 0).all()


def test_example_verify_minorization(capsys):
    assert run(["example", "verify-minorization"]) == EXIT_PASS
    report = json.loads(capsys.readouterr().out)
    assert report["command"] == "verify-minorization"
    assert report["results"]["minorization"]["passed"] is True


def test_verify_drift_with_small_grid(tmp_path):
    out = tmp_path / "drift.json"
    assert run(["verify-drift", "--y", "-3", "--grid-points", "21", "--report", str(out)]) == EXIT_PASS
    drift = _report(out)["results"]["drift"]
    assert drift["grid_points"] == 21
    assert drift["lambda"] < drift["lambda_bound"]


def test_pdf_summary(tmp_path):
    pdf = tmp_path / "summary.pdf"
    assert run(["two-component", "fixture:rho-0.9", "--pdf", str(pdf), "--report", str(tmp_path / "r.json")]) == 0
    assert pdf.read_bytes().startswith(b"%PDF")


def test_fixture_file_contents():
    fixtures = load_fixtures()
    assert len(fixtures) == 25
    assert sum(name.startswith("random-") for name in fixtures) == 20
    assert all(t.strictly_positive for t in fixtures.values())
    assert {t.K for name, t in fixtures.items() if name.startswith("random-")} == {2, 3, 4}


def test_load_target_references():
    assert load_target("random:2,[2,3],1").space.shape == (2, 3)
    assert load_target("fixture:rho-0.25").dim == 4
    with pytest.raises(TargetError):
        load_target("fixture:nope")
    with pytest.raises(TargetError):
        load_target(None)


def test_run_config_records_options():
    config = RunConfig(command="spectra", options={"mode": "cycle", "family": None})
    data = config.to_dict()
    assert data["options"] == {"mode": "cycle"}
    assert data["seed"] == 42


@pytest.mark.slow
def test_all_checks_pass(tmp_path):
    out = tmp_path / "suite.json"
    assert run(["all-checks", "--report", str(out)]) == EXIT_PASS
    report = _report(out)
    assert report["failures"] == []
    assert len(report["results"]) == 11
