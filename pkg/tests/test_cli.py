import json
import subprocess
import sys

import pytest

from capexp.cli import EXIT_ERROR, EXIT_OK, run_cli
from capexp.reports import CONVERGENCE_HEADER, PLAN_HEADER, UC_COST_HEADER, read_plan, write_plan

TINY = ["--stages", "2", "--days", "1", "--scenarios", "2", "--hours", "3", "--seed", "3", "--quiet"]


def _tiny_system(tmp_path):
    from capexp.grid import random_system
    s = random_system(3, 3)
    doc = {
        "buses": [{"id": b.id, "peak_load": b.peak_load} for b in s.buses],
        "generators": [{k: getattr(g, k) for k in ("id", "bus", "existing", "kind", "a", "b", "c", "startup_cost",
                                                  "p_min", "p_max", "min_on", "min_off", "capital_cost")}
                       for g in s.generators if not g.penalty],
        "lines": [{"id": l.id, "from_bus": l.from_bus, "to_bus": l.to_bus, "existing": l.existing,
                   "flow_limit": l.flow_limit, "capital_cost": l.capital_cost} for l in s.lines],
        "storages": [{"id": x.id, "bus": x.bus, "existing": x.existing, "capacity": x.capacity,
                      "capital_cost": x.capital_cost} for x in s.storages],
    }
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(doc))
    return path


def test_help_exits_zero(capsys):
    assert run_cli(["--help"]) == EXIT_OK
    assert "plan" in capsys.readouterr().out
    assert run_cli(["plan", "--help"]) == EXIT_OK


def test_bad_flag_exits_one():
    assert run_cli(["plan", "--no-such-flag"]) == EXIT_ERROR


def test_missing_system_file_exits_one(tmp_path, capsys):
    assert run_cli(["plan", "--system", str(tmp_path / "nope.json"), *TINY, "--out", str(tmp_path)]) == EXIT_ERROR
    assert "error:" in capsys.readouterr().err


def test_plan_writes_reports(tmp_path, capsys):
    system = _tiny_system(tmp_path)
    out = tmp_path / "out"
    code = run_cli(["plan", "--system", str(system), *TINY[:-1], "--out", str(out)])
    assert code == EXIT_OK
    stdout = capsys.readouterr().out.splitlines()
    assert stdout[0] == "iter,lb,ub,gap,columns_added,cuts_added,seconds"
    assert all(len(line.split(",")) == 7 for line in stdout[1:])
    for name, header in (("plan.csv", PLAN_HEADER), ("convergence.csv", CONVERGENCE_HEADER),
                         ("uc_costs.csv", UC_COST_HEADER)):
        text = (out / name).read_text(encoding="utf-8")
        assert text.splitlines()[0] == ",".join(header)
        assert text.endswith("\n")
    summary = (out / "summary.txt").read_text()
    assert "status: converged" in summary and "subproblem_solves:" in summary


@pytest.mark.parametrize("algorithm", ["cg", "benders", "direct"])
def test_plan_other_algorithms(tmp_path, algorithm):
    system = _tiny_system(tmp_path)
    assert run_cli(["plan", "--algorithm", algorithm, "--system", str(system), *TINY,
                    "--out", str(tmp_path / algorithm)]) == EXIT_OK


def test_rerun_gives_identical_plan_bytes(tmp_path):
    system = _tiny_system(tmp_path)
    for name in ("a", "b"):
        assert run_cli(["plan", "--system", str(system), *TINY, "--out", str(tmp_path / name)]) == EXIT_OK
    assert (tmp_path / "a" / "plan.csv").read_bytes() == (tmp_path / "b" / "plan.csv").read_bytes()


def test_evaluate_round_trip(tmp_path, capsys):
    system = _tiny_system(tmp_path)
    assert run_cli(["plan", "--system", str(system), *TINY, "--out", str(tmp_path / "p")]) == EXIT_OK
    capsys.readouterr()
    code = run_cli(["evaluate", "--system", str(system), *TINY[:-1], "--plan", str(tmp_path / "p" / "plan.csv"),
                    "--out", str(tmp_path / "e")])
    assert code == EXIT_OK
    text = (tmp_path / "e" / "evaluation.txt").read_text()
    assert "scenario_seed: 4" in text and "feasible: true" in text
    assert capsys.readouterr().out == text


def test_evaluate_rejects_foreign_plan(tmp_path):
    system = _tiny_system(tmp_path)
    bad = tmp_path / "plan.csv"
    bad.write_text("node,stage,asset,built\n1,1,NOPE,1\n")
    assert run_cli(["evaluate", "--system", str(system), *TINY[:-1], "--plan", str(bad)]) == EXIT_ERROR


def test_direct_refused_on_large_instance(capsys):
    code = run_cli(["plan", "--algorithm", "direct", "--system", "ieee118.json", "--stages", "6", "--days", "1",
                    "--scenarios", "100", "--hours", "24", "--quiet", "--out", "/nonexistent-never-written"])
    assert code == EXIT_ERROR
    assert "limit" in capsys.readouterr().err


def test_time_limit_with_incumbent_exits_two(tmp_path):
    code = run_cli(["plan", "--system", "sixbus.json", "--stages", "2", "--days", "1", "--scenarios", "2",
                    "--hours", "6", "--time-limit", "0.001", "--quiet", "--out", str(tmp_path)])
    assert code == 2
    assert (tmp_path / "plan.csv").read_text().count("\n") > 1


def test_empty_candidate_set_plan_has_header_only(tmp_path):
    from capexp.grid import system_from_dict
    from capexp.ncd import ExpansionPlan
    from capexp.scenario import build_scenario_tree
    tree = build_scenario_tree(2)
    system = system_from_dict({"buses": [{"id": 1, "peak_load": 1}],
                               "generators": [{"id": "G", "bus": 1, "existing": True, "kind": "coal", "p_max": 5}]})
    path = tmp_path / "plan.csv"
    write_plan(path, ExpansionPlan({n: [] for n in tree.ids}, ()), tree)
    assert path.read_text() == "node,stage,asset,built\n"
    assert all(v.size == 0 for v in read_plan(path, system, tree).builds.values())


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "capexp.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "evaluate" in res.stdout
