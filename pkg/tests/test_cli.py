import csv
import json
import os

import pytest

from vinolab.cli import (BUDGET_ENV, EXIT_BUDGET, EXIT_INVALID, EXIT_OK, EXIT_USAGE,
                         append_record, emit_plotdata, read_records, run)
from vinolab.errors import EmptySelection


def call(capsys, *argv):
    code = run(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if code == EXIT_OK and out.lstrip().startswith("{") else out)


def test_count_all_algorithms(tmp_path, capsys):
    out = str(tmp_path / "r.jsonl")
    code, res = call(capsys, "count", "--n", "2", "--s", "2", "--N", "2", "--algo", "all", "--out", out)
    assert code == EXIT_OK
    assert res == {"naive": 6, "mitm": 6, "torus": 6, "agreement": True}
    (rec,) = read_records(out)
    assert rec["subcommand"] == "count" and rec["results"] == res
    assert rec["params"]["n"] == 2 and rec["params"]["algo"] == "all"
    assert {"timestamp", "version", "runtime_seconds"} <= set(rec)


def test_appendix_exact_strings(tmp_path, capsys):
    code, res = call(capsys, "appendix", "--n", "3", "--delta", "4", "--theta", "0",
                     "--out", str(tmp_path / "r.jsonl"))
    assert code == EXIT_OK
    assert res["omega"] == ["1/1", "1/2", "0/1"]
    assert res["eta"] == ["2/1", "1/1"]


def test_threshold_verdict(tmp_path, capsys):
    code, res = call(capsys, "threshold", "--n", "3", "--delta", "3999/1000", "--no-record")
    assert code == EXIT_OK
    assert res["verdict"] is True and res["margin"] == "999/1996001"


def test_weights_and_tree(capsys):
    code, res = call(capsys, "weights", "--n", "3", "--p", "12", "--series-r", "5", "--no-record")
    assert code == EXIT_OK and res["weights"]["beta"] == {"2": "8/9"}
    code, res = call(capsys, "tree", "--n", "3", "--p", "12", "--depth", "2", "--no-record")
    assert code == EXIT_OK and res["gamma_b"] == [["1/3", "2/1"], ["1/27", "3/1"]]


def test_exit_codes(capsys):
    assert run(["count", "--n", "2"]) == EXIT_USAGE
    assert run(["nonsense"]) == EXIT_USAGE
    assert run(["count", "--n", "2", "--s", "2", "--N", "2", "--bogus"]) == EXIT_USAGE
    assert run(["appendix", "--n", "3", "--delta", "2", "--no-record"]) == EXIT_INVALID
    assert run(["appendix", "--n", "2", "--delta", "5", "--no-record"]) == EXIT_INVALID
    assert run(["count", "--n", "2", "--s", "3", "--N", "500", "--algo", "naive",
                "--max-tuples", "1000", "--no-record"]) == EXIT_BUDGET
    assert run(["count", "--n", "2", "--s", "2", "--N", "2", "--max-tuples", "0",
                "--no-record"]) == EXIT_INVALID
    capsys.readouterr()


def test_budget_profile_from_environment(monkeypatch, capsys):
    argv = ["count", "--n", "2", "--s", "3", "--N", "300", "--algo", "naive", "--no-record"]
    monkeypatch.setenv(BUDGET_ENV, "small")
    assert run(argv) == EXIT_BUDGET
    assert run(["arcs", "--n", "2", "--N", "16", "--samples", "1000", "--no-record"]) == EXIT_OK
    capsys.readouterr()


def test_records_round_trip_and_append(tmp_path, capsys):
    out = str(tmp_path / "r.jsonl")
    for N in ("2", "3"):
        assert run(["count", "--n", "2", "--s", "2", "--N", N, "--out", out]) == EXIT_OK
    capsys.readouterr()
    recs = read_records(out)
    assert [r["results"]["mitm"] for r in recs] == [6, 15]
    for r in recs:
        assert json.loads(json.dumps(r, sort_keys=True)) == r
    append_record(out, {"extra": [1, "1/2"]})
    assert read_records(out)[-1] == {"extra": [1, "1/2"]}
    assert not [f for f in os.listdir(tmp_path) if f.startswith(".records-")]


@pytest.mark.parametrize("argv", [
    ["minor-sup", "--n", "2", "--N-list", "16,32", "--samples", "2000", "--seed", "3"],
    ["arcs", "--n", "2", "--N", "64", "--samples", "5000", "--seed", "1"],
    ["torus-moment", "--n", "2", "--s", "2", "--N", "3", "--samples", "1000", "--seed", "2"],
    ["vp-scan", "--n", "2", "--p", "6,12", "--delta", "1/2,1/4", "--trials", "3", "--seed", "4"],
    ["restriction", "--n", "2", "--p", "6", "--N", "4", "--samples", "2000", "--seed", "5"],
])
def test_reproducible_results(tmp_path, capsys, argv):
    out = str(tmp_path / "r.jsonl")
    assert run(argv + ["--out", out]) == EXIT_OK
    assert run(argv + ["--out", out]) == EXIT_OK
    capsys.readouterr()
    a, b = read_records(out)
    assert json.dumps(a["results"], sort_keys=True) == json.dumps(b["results"], sort_keys=True)
    assert a["params"] == b["params"]


def test_growth_plot_data(tmp_path, capsys):
    plots = tmp_path / "plots"
    code = run(["count", "--n", "2", "--s", "4", "--N-list", "4,8,16", "--no-record",
                "--plot-dir", str(plots)])
    assert code == EXIT_OK
    capsys.readouterr()
    desc = json.loads((plots / "count.plot.json").read_text())
    assert 5 in [r["slope"] for r in desc["reference_lines"]]
    assert desc["logx"] and desc["logy"]
    with open(plots / "count.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["N"]) for r in rows] == [4, 8, 16]
    assert {"log_N", "log_J"} <= set(rows[0])
    assert (plots / "count.png").stat().st_size > 1000


def test_appendix_sweep_crosses_zero(tmp_path, capsys):
    out = str(tmp_path / "r.jsonl")
    assert run(["appendix", "--n", "3", "--delta-list", "39/10,4,41/10", "--out", out]) == EXIT_OK
    capsys.readouterr()
    paths = emit_plotdata(read_records(out), str(tmp_path / "p"), "sweep")
    with open(paths["csv"]) as fh:
        rows = list(csv.DictReader(fh))
    margins = [float(r["margin"]) for r in rows]
    assert margins[0] > 0 and margins[1] == 0 and margins[2] < 0
    assert os.path.exists(paths["figure"])


def test_plot_subcommand_and_empty_selection(tmp_path, capsys):
    out = str(tmp_path / "r.jsonl")
    assert run(["vp-scan", "--n", "2", "--delta", "1/2,1/4", "--trials", "2", "--out", out]) == EXIT_OK
    assert run(["plot", "--records", out, "--select", "vp-scan", "--plot-dir",
                str(tmp_path / "p")]) == EXIT_OK
    assert (tmp_path / "p" / "plot.png").exists()
    assert run(["plot", "--records", out, "--select", "count", "--plot-dir",
                str(tmp_path / "p")]) == EXIT_INVALID
    capsys.readouterr()
    with pytest.raises(EmptySelection):
        emit_plotdata([], str(tmp_path / "q"))


def test_csv_output(capsys):
    assert run(["minor-sup", "--n", "2", "--N-list", "16,32", "--samples", "1000",
                "--no-record", "--format", "csv"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "N,sup_estimate" and len(lines) == 3
