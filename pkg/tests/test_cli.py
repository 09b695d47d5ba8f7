import json
import subprocess
import sys

import numpy as np
import pytest

from cctpca.cli import main
from cctpca.config import ConfigError, build_config, read_config_file
from cctpca.netmodel import ieee14, nominal_parameters, write_parameters

from oracles import OMIB_LOSSLESS
from test_dynamics import _ieee14_with_stub


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _json(capsys, *argv):
    code, out, err = _run(capsys, *argv, "--json")
    return code, json.loads(out), err


def _without_timestamp(doc):
    if isinstance(doc, dict):
        return {k: _without_timestamp(v) for k, v in doc.items() if k != "timestamp"}
    return doc


# -- powerflow --------------------------------------------------------------------


def test_powerflow_table(capsys):
    code, out, _ = _run(capsys, "powerflow")
    assert code == 0
    assert "converged" in out
    assert len([ln for ln in out.splitlines() if ln.strip()]) == 2 + 14


def test_powerflow_json_carries_the_same_solution(capsys):
    code, doc, _ = _json(capsys, "powerflow")
    assert code == 0 and doc["converged"]
    assert doc["max_mismatch"] <= 1e-8
    assert [r["bus"] for r in doc["buses"]] == list(range(1, 15))
    assert doc["buses"][0]["vm"] == pytest.approx(1.06)


def test_malformed_file_is_an_input_error_with_line_number(tmp_path, capsys):
    bad = tmp_path / "bad.sys"
    bad.write_text("[buses]\nbus: id=1, type=slack, v=1.0\nbus: id=two, type=PQ\n")
    code, _, err = _run(capsys, "powerflow", "--system", str(bad))
    assert code == 2
    assert "line 3" in err


def test_missing_file_is_an_input_error(tmp_path, capsys):
    code, _, err = _run(capsys, "powerflow", "--system", str(tmp_path / "nope.sys"))
    assert code == 2 and "not found" in err


def test_non_converged_power_flow_is_an_analysis_failure(tmp_path, capsys):
    s = ieee14()
    lam = nominal_parameters(s)
    is_load = np.isin(lam.classes, ["P_L", "Q_L"])
    params = tmp_path / "heavy.csv"
    params.write_text(write_parameters(lam.with_values(np.where(is_load, lam.values * 1000, lam.values))))
    code, doc, _ = _json(capsys, "powerflow", "--params", str(params))
    assert code == 1 and not doc["converged"]


# -- cct --------------------------------------------------------------------------


def test_cct_case_one(tmp_path, capsys, cct14):
    code, doc, _ = _json(capsys, "cct", "--case", "I", "--out-dir", str(tmp_path))
    assert code == 0
    assert doc["status"] == "ok"
    assert doc["t_cr"] == cct14("I").t_cr
    lo, hi = doc["bracket"]
    assert lo <= doc["t_cr"] <= hi and hi - lo <= 1e-4
    assert (tmp_path / "cct.json").is_file() and (tmp_path / "trajectory.csv").is_file()


@pytest.mark.parametrize("case, reference", [("I", 0.3617), ("III", 1.4058)])
def test_clearing_time_order_of_magnitude(capsys, case, reference):
    # same order of magnitude: within a factor of ten of the reference time
    code, doc, _ = _json(capsys, "cct", "--case", case)
    assert code == 0
    assert reference / 10 <= doc["t_cr"] <= reference * 10


def test_explicit_fault_overrides_the_case(capsys, cct14):
    code, doc, _ = _json(capsys, "cct", "--case", "II", "--fault-bus", "1", "--clear-line", "1-5")
    assert code == 0
    assert doc["scenario"]["faulted_bus"] == 1
    assert doc["t_cr"] == cct14("I").t_cr


def test_unknown_line_is_an_input_error(capsys):
    code, _, _ = _run(capsys, "cct", "--fault-bus", "1", "--clear-line", "1-14")
    assert code == 2


def test_stub_fault_exits_stable_beyond_horizon(tmp_path, capsys):
    path = tmp_path / "stub.sys"
    path.write_text(_ieee14_with_stub())
    code, doc, _ = _json(capsys, "cct", "--system", str(path), "--fault-bus", "15", "--clear-line", "14-15")
    assert code == 3
    assert doc["status"] == "stable_beyond_horizon" and doc["t_cr"] is None


def test_unstable_at_zero_clearing_has_its_own_exit_code(tmp_path, capsys):
    path = tmp_path / "omib.sys"
    path.write_text(OMIB_LOSSLESS.format(p=0.8))
    code, _, err = _run(capsys, "cct", "--system", str(path), "--fault-bus", "2", "--clear-line", "1-2")
    assert code == 4 and err


# -- rank -------------------------------------------------------------------------


def test_rank_threshold_one_selects_everything(tmp_path, capsys):
    code, doc, _ = _json(capsys, "rank", "--case", "I", "--threshold", "1.0", "--out-dir", str(tmp_path))
    assert code == 0
    assert len(doc["selected"]) == len(doc["entries"]) == 82
    assert (tmp_path / "ranking.csv").is_file() and (tmp_path / "ranking.json").is_file()


def test_rank_tiny_threshold_selects_one(capsys):
    code, doc, _ = _json(capsys, "rank", "--case", "I", "--threshold", "0.0001")
    assert code == 0
    assert len(doc["selected"]) == 1


def test_case_one_ranking_contains_the_expected_lines(capsys):
    # lines 1-2 and 1-5 and the bus 3 active load among the top entries
    code, doc, _ = _json(capsys, "rank", "--case", "I", "--threshold", "0.975")
    assert code == 0
    sel = doc["selected"]
    assert "P_L@3" in sel
    assert any(p.endswith("@1-2") for p in sel)
    assert any(p.endswith("@1-5") for p in sel)


def test_invalid_threshold_is_an_input_error(capsys):
    code, _, _ = _run(capsys, "rank", "--case", "I", "--threshold", "1.5")
    assert code == 2


# -- mc and compare ---------------------------------------------------------------


def test_single_sample_has_zero_sigma(tmp_path, capsys, cct14):
    code, doc, _ = _json(capsys, "mc", "--case", "I", "-N", "1", "--seed", "3", "--out-dir", str(tmp_path))
    assert code == 0
    assert doc["N"] == 1 and doc["sigma"] == 0.0
    assert {p.name for p in tmp_path.iterdir()} == {"full.json", "full_cct.csv", "full_hist.csv"}


def test_worker_count_does_not_change_the_report(tmp_path, capsys):
    args = ["mc", "--case", "I", "-N", "4", "--seed", "21"]
    _, one, _ = _json(capsys, *args, "--workers", "1", "--out-dir", str(tmp_path / "a"))
    _, two, _ = _json(capsys, *args, "--workers", "2", "--out-dir", str(tmp_path / "b"))
    a = json.dumps(_without_timestamp(one), sort_keys=True)
    b = json.dumps(_without_timestamp(two), sort_keys=True)
    assert a == b
    assert (tmp_path / "a" / "full_cct.csv").read_bytes() == (tmp_path / "b" / "full_cct.csv").read_bytes()


def test_paired_run_and_compare(tmp_path, capsys):
    ranking = tmp_path / "rank"
    assert main(["rank", "--case", "I", "--threshold", "0.9", "--out-dir", str(ranking)]) == 0
    capsys.readouterr()
    out = tmp_path / "mc"
    code, doc, _ = _json(
        capsys, "mc", "--case", "I", "-N", "8", "--seed", "5",
        "--ranking", str(ranking / "ranking.csv"), "--out-dir", str(out),
    )
    assert code == 0
    assert doc["reduced"]["variance_retention"] == pytest.approx(
        (doc["reduced"]["sigma"] / doc["full"]["sigma"]) ** 2
    )
    code, cmp_doc, _ = _json(capsys, "compare", str(out / "full.json"), str(out / "reduced.json"))
    assert code == 0
    assert cmp_doc["variance_retention"] == pytest.approx(doc["reduced"]["variance_retention"], rel=1e-12)


def test_compare_rejects_zero_variance(tmp_path, capsys):
    for name, sigma in (("f.json", 0.0), ("r.json", 0.0)):
        (tmp_path / name).write_text(json.dumps({"mu": 0.3, "sigma": sigma, "N": 1}))
    code, _, _ = _run(capsys, "compare", str(tmp_path / "f.json"), str(tmp_path / "r.json"))
    assert code == 1


def test_compare_rejects_non_reports(tmp_path, capsys):
    (tmp_path / "x.json").write_text("[1, 2]")
    code, _, _ = _run(capsys, "compare", str(tmp_path / "x.json"), str(tmp_path / "x.json"))
    assert code == 2


# -- configuration ----------------------------------------------------------------


def test_config_file_values_and_flag_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# study setup\ncase = III\ncv-load = 0.1\nn = 20  # small\nseed = 4\n")
    values = read_config_file(path)
    cfg = build_config(values, {"seed": 9, "n": None})
    assert cfg.case == "III" and cfg.cv_load == 0.1
    assert cfg.n == 20  # unset flag leaves the file value
    assert cfg.seed == 9  # flags win


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("colour = blue\n")
    with pytest.raises(ConfigError):
        read_config_file(path)


def test_config_file_drives_the_cli(tmp_path, capsys, cct14):
    path = tmp_path / "run.cfg"
    path.write_text("case = II\n")
    code, doc, _ = _json(capsys, "cct", "--config", str(path), "--case", "I")
    assert code == 0 and doc["scenario"]["name"] == "I"
    assert doc["t_cr"] == cct14("I").t_cr


def test_worker_environment_variable(monkeypatch):
    monkeypatch.setenv("CCTPCA_WORKERS", "3")
    assert build_config({}, {}).worker_count == 3
    assert build_config({}, {"workers": 1}).worker_count == 1


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "cctpca", "powerflow", "--json"], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["converged"]
