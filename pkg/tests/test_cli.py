import csv
import json
from importlib import resources

import jsonschema
import pytest

from prhr.cli import main

SMALL = ["--nodes", "3", "--periods", "2", "--scenarios", "2", "--seed", "1"]


@pytest.fixture(scope="module")
def schema():
    return json.loads(resources.files("prhr").joinpath("schemas/summary.schema.json").read_text())


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_gen_is_byte_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["gen", *SMALL, "--out", str(a)]) == 0
    assert main(["gen", *SMALL, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_packaged_tiny_instance_matches_generator(tmp_path):
    out = tmp_path / "tiny.json"
    assert main(["gen", "--nodes", "2", "--periods", "1", "--scenarios", "1", "--seed", "7", "--out", str(out)]) == 0
    assert out.read_bytes() == resources.files("prhr").joinpath("data/tiny.json").read_bytes()


@pytest.mark.parametrize("strategy", ["mpbd", "exact"])
def test_solve_writes_valid_outputs(tmp_path, schema, strategy):
    out = tmp_path / strategy
    assert main(["solve", *SMALL, "--strategy", strategy, "--iter1-max", "5", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    jsonschema.validate(summary, schema)
    res = summary["result"]
    assert res["lb"] <= res["ub"] + 1e-9
    assert _rows(out / "trace_outer.csv")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["defaults"]["eps_bd"] == 0.01 and manifest["defaults"]["core_lambda"] == 0.5
    assert {p.rsplit("/", 1)[-1] for p in manifest["outputs"]} >= {"summary.json", "trace_outer.csv"}


def test_solve_reads_instance_file(tmp_path):
    inst = tmp_path / "inst.json"
    main(["gen", *SMALL, "--out", str(inst)])
    a, b = tmp_path / "from_file", tmp_path / "from_flags"
    assert main(["solve", "--instance", str(inst), "--strategy", "exact", "--out", str(a)]) == 0
    assert main(["solve", *SMALL, "--strategy", "exact", "--out", str(b)]) == 0
    ua = json.loads((a / "summary.json").read_text())["result"]["ub"]
    ub = json.loads((b / "summary.json").read_text())["result"]["ub"]
    assert ua == pytest.approx(ub, abs=1e-9)


def test_compare_columns(tmp_path, schema):
    out = tmp_path / "cmp"
    assert main(["compare", *SMALL, "--seeds", "1-2", "--warm", "1", "--out", str(out)]) == 0
    rows = _rows(out / "compare.csv")
    assert list(rows[0]) == ["strategy", "seed", "iterations", "final_gap", "cuts", "wall_ms"]
    assert len(rows) == 8
    jsonschema.validate(json.loads((out / "summary.json").read_text()), schema)


def test_failure_sim_without_failures(tmp_path, schema):
    out = tmp_path / "fail"
    assert main(["failure-sim", *SMALL, "--failure-prob", "0", "--sim-scenarios", "50", "--out", str(out)]) == 0
    rows = _rows(out / "failure.csv")
    assert [r["model"] for r in rows] == ["PRH-R", "RFM"]
    assert all(float(r["unserved_total"]) == 0.0 for r in rows)
    jsonschema.validate(json.loads((out / "summary.json").read_text()), schema)


def test_saa_grid(tmp_path, schema):
    out = tmp_path / "saa"
    argv = ["saa", *SMALL, "--samples", "2", "--replications", "2", "--reference", "8", "--out", str(out)]
    assert main(argv) == 0
    rows = _rows(out / "saa_grid.csv")
    assert rows[0]["status"] == "ok"
    assert float(rows[0]["gap"]) == pytest.approx(float(rows[0]["ub"]) - float(rows[0]["mu_lb"]))
    jsonschema.validate(json.loads((out / "summary.json").read_text()), schema)


def test_bad_instance_path_fails(tmp_path, capsys):
    assert main(["solve", "--instance", str(tmp_path / "missing.json"), "--out", str(tmp_path / "x")]) == 1
    assert "error" in capsys.readouterr().err


def test_bad_arguments_exit_via_argparse():
    with pytest.raises(SystemExit):
        main(["solve", "--strategy", "nope", "--out", "x"])
