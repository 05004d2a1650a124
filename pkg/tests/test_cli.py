import csv
import json
from dataclasses import replace

import pytest

from gapfinder.cli import EXIT_BUDGET, EXIT_FAIL, EXIT_OK, exit_code, main
from gapfinder.search import SearchConfig, problem_for, run_search
from gapfinder.te import DETOUR_DEMANDS, DPConfig, TEAnalysis, detour_topology

DETOUR_PAIRS = [list(p) for p in DETOUR_DEMANDS]


def write(path, data):
    path.write_text(json.dumps(data))
    return str(path)


@pytest.fixture
def detour_config(tmp_path):
    return write(tmp_path / "cfg.json", {"problem": "te", "topology": "detour", "heuristic": "dp", "d_max": 100,
                                         "dp_threshold": 50, "quantiles": [0, 50, 100], "pairs": DETOUR_PAIRS,
                                         "solver": {"backend": "highs", "time_limit": 60}})


def test_analyze_writes_report_csv_and_plot(tmp_path, detour_config):
    out = tmp_path / "rep.json"
    assert main(["analyze", "--config", detour_config, "--output", str(out)]) == EXIT_OK
    rep = json.loads(out.read_text())
    assert rep["gap"] == pytest.approx(100.0, abs=1e-5)
    assert rep["validated"] and rep["config"]["resolved"]["dp_threshold"] == 50
    rows = list(csv.reader(open(tmp_path / "rep_timeseries.csv")))
    assert len(rows) >= 2
    assert (tmp_path / "rep_gap.png").read_bytes()[:4] == b"\x89PNG"


def test_flag_and_set_overrides(tmp_path, detour_config):
    out = tmp_path / "rep.json"
    code = main(["analyze", "--config", detour_config, "--backend", "builtin", "--set", "dp_threshold=0",
                 "--output", str(out), "--no-plot"])
    rep = json.loads(out.read_text())
    assert code == EXIT_OK
    assert rep["solver"]["backend"] == "builtin"
    # with nothing pinned DP is the optimum
    assert rep["gap"] == pytest.approx(0.0, abs=1e-6)
    assert not (tmp_path / "rep_gap.png").exists()


def test_partitioned_analyze(tmp_path, detour_config):
    out = tmp_path / "rep.json"
    pairs = [[f"{c}:{s}", f"{c}:{t}"] for c in range(2) for s, t in DETOUR_DEMANDS]
    code = main(["analyze", "--config", detour_config, "--set", "disjoint_copies=2", "--set",
                 f"pairs={json.dumps(pairs)}", "--partitions", "2", "--output", str(out)])
    rep = json.loads(out.read_text())
    assert code == EXIT_OK and rep["method"] == "partitioned"
    assert rep["gap"] == pytest.approx(200.0, abs=1e-5)


def test_baseline(tmp_path, detour_config):
    out = tmp_path / "b.json"
    code = main(["baseline", "--config", detour_config, "--method", "random", "--budget", "1",
                 "--set", "search.max_evals=50", "--output", str(out)])
    rep = json.loads(out.read_text())
    assert code == EXIT_OK
    assert rep["solver"]["evaluations"] == 50 and 0 <= rep["gap"] <= 100.0 + 1e-6
    assert (tmp_path / "b_gap.png").exists()


def test_sched_and_vbp_analyze(tmp_path):
    out = tmp_path / "s.json"
    cfg = write(tmp_path / "s_cfg.json", {"problem": "sched", "packets": 4, "r_max": 3, "reference": "opt",
                                          "sp_pifo": {"queues": 2}, "solver": {"backend": "highs"}})
    assert main(["analyze", "--config", cfg, "--output", str(out)]) == EXIT_OK
    assert len(json.loads(out.read_text())["ranks"]) == 4
    cfg = write(tmp_path / "v_cfg.json", {"problem": "vbp", "balls": 3, "dims": 1,
                                          "solver": {"backend": "highs"}})
    assert main(["analyze", "--config", cfg, "--output", str(tmp_path / "v.json")]) == EXIT_OK


def test_construct_then_simulate(tmp_path):
    inst = tmp_path / "ffd.json"
    assert main(["construct", "ffdsum", "--m", "1", "--output", str(inst)]) == EXIT_OK
    data = json.loads(inst.read_text())
    assert data["simulated"] == data["predicted"] == {"ffd_bins": 4, "opt_bins": 2}
    out = tmp_path / "sim.json"
    assert main(["simulate", "--problem", "vbp", "--heuristic", "ffd", "--input", str(inst),
                 "--output", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["value"] == 4

    trace = tmp_path / "trace.json"
    assert main(["construct", "sp-pifo", "--packets", "7", "--r-max", "8", "--output", str(trace)]) == EXIT_OK
    assert json.loads(trace.read_text())["simulated_gap"] == 56
    delays = {}
    for name in ("sp_pifo", "opt"):
        assert main(["simulate", "--problem", "sched", "--heuristic", name, "--input", str(trace),
                     "--output", str(out)]) == EXIT_OK
        delays[name] = json.loads(out.read_text())["wdelay"]
    assert delays["sp_pifo"] - delays["opt"] == 56


def test_simulate_te(tmp_path):
    demands = tmp_path / "d.json"
    demands.write_text(json.dumps([{"src": s, "dst": t, "value": v} for (s, t), v in DETOUR_DEMANDS.items()]))
    out = tmp_path / "o.json"
    for name, value in (("dp", 150.0), ("opt", 250.0)):
        assert main(["simulate", "--problem", "te", "--heuristic", name, "--topology", "detour",
                     "--dp-threshold", "50", "--input", str(demands), "--output", str(out)]) == EXIT_OK
        assert json.loads(out.read_text())["value"] == pytest.approx(value)


def test_export_mps(tmp_path, detour_config):
    out = tmp_path / "m.mps"
    assert main(["export-mps", "--config", detour_config, "--output", str(out)]) == EXIT_OK
    text = out.read_text()
    assert "ROWS" in text and "COLUMNS" in text and text.rstrip().endswith("ENDATA")


def test_infeasible_exit_code(tmp_path, detour_config):
    # both demands into node 3 are pinned to the 100-capacity link 2->3
    code = main(["analyze", "--config", detour_config, "--set", "dp_threshold=80",
                 "--set", 'fixed=[["1","3",80],["2","3",80]]', "--output", str(tmp_path / "r.json")])
    assert code == EXIT_FAIL


@pytest.mark.parametrize("argv", [
    ["analyze", "--problem", "te", "--heuristic", "ffd"],
    ["analyze", "--problem", "vbp", "--reference", "pifo"],
    ["analyze", "--set", "nokey"],
    ["analyze", "--config", "/nonexistent.json"],
    ["simulate", "--problem", "te", "--heuristic", "greedy", "--input", "/nonexistent.json"],
])
def test_bad_input_exit_code(argv):
    assert main(argv) == EXIT_FAIL


def test_budget_exit_code():
    a = TEAnalysis(detour_topology(), "dp", d_max=100, dp=DPConfig(threshold=50), pairs=list(DETOUR_DEMANDS))
    rep = run_search(problem_for(a), SearchConfig(max_evals=1))
    assert exit_code(rep) == EXIT_OK
    assert exit_code(replace(rep, gap=float("nan"), status="BudgetExhausted")) == EXIT_BUDGET
    assert exit_code(replace(rep, gap=float("nan"), status="Error")) == EXIT_FAIL
    assert exit_code(replace(rep, validated=False)) == EXIT_FAIL
