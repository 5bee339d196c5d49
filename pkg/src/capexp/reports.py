"""CSV and text reports of a planning run, and reading a plan back."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .grid import PowerSystem
from .ncd.engine import ExpansionPlan, SolveResult
from .scenario import ScenarioTree

PLAN_HEADER = ("node", "stage", "asset", "built")
CONVERGENCE_HEADER = ("iter", "lb", "ub", "gap", "columns_added", "cuts_added", "seconds", "subproblem_solves")
UC_COST_HEADER = ("node", "stage", "day", "expected_toc")


def _num(v: float | None) -> str:
    # repr keeps full precision, always uses '.', and spells infinities as inf / -inf
    return "" if v is None else repr(float(v))


def _writer(path: Path):
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def progress_line(row) -> str:
    """One progress line: iter, lb, ub, gap, columns_added, cuts_added, seconds."""
    return ",".join([str(row.iteration), _num(row.lb), _num(row.ub), _num(row.gap), str(row.columns_added),
                     str(row.cuts_added), f"{row.seconds:.3f}"])


def write_plan(path: str | Path, plan: ExpansionPlan | None, tree: ScenarioTree) -> None:
    fh, w = _writer(Path(path))
    with fh:
        w.writerow(PLAN_HEADER)
        if plan is None:
            return
        for n in tree.ids:
            for asset, v in zip(plan.asset_ids, plan.builds[n]):
                w.writerow((n, tree.node(n).stage, asset, int(round(v))))


def read_plan(path: str | Path, system: PowerSystem, tree: ScenarioTree) -> ExpansionPlan:
    """Parse a ``plan.csv`` written by :func:`write_plan` for the same system and tree."""
    assets = tuple(a.id for a in system.candidate_assets)
    index = {a: i for i, a in enumerate(assets)}
    builds = {n: np.zeros(len(assets)) for n in tree.ids}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != PLAN_HEADER:
            raise ValueError(f"{path}: expected header {','.join(PLAN_HEADER)}")
        for rec in reader:
            n = int(rec["node"])
            if n not in builds:
                raise ValueError(f"{path}: node {n} is not in the scenario tree")
            if rec["asset"] not in index:
                raise ValueError(f"{path}: unknown asset {rec['asset']!r}")
            builds[n][index[rec["asset"]]] = float(int(rec["built"]))
    return ExpansionPlan(builds, assets)


def write_convergence(path: str | Path, result: SolveResult) -> None:
    fh, w = _writer(Path(path))
    with fh:
        w.writerow(CONVERGENCE_HEADER)
        for r in result.trace:
            w.writerow((r.iteration, _num(r.lb), _num(r.ub), _num(r.gap), r.columns_added, r.cuts_added,
                        f"{r.seconds:.3f}", r.subproblem_solves))


def write_uc_costs(path: str | Path, result: SolveResult, tree: ScenarioTree) -> None:
    fh, w = _writer(Path(path))
    with fh:
        w.writerow(UC_COST_HEADER)
        for n in tree.ids:
            for day, v in zip(tree.days, result.operating_cost.get(n, ())):
                w.writerow((n, tree.node(n).stage, day, _num(v)))


def summary_text(result: SolveResult, tree: ScenarioTree) -> str:
    lines = [
        f"algorithm: {result.algorithm}",
        f"status: {result.status}",
        f"objective: {_num(result.objective)}",
        f"lower_bound: {_num(result.lower_bound)}",
        f"gap: {_num(result.gap)}",
        f"capital_cost: {_num(result.capital_cost)}",
        f"iterations: {result.iterations}",
        f"subproblem_solves: {result.subproblem_solves}",
        f"branched: {str(result.branched).lower()}",
        f"master_integral: {str(result.master_integral).lower()}",
        f"seconds: {result.seconds:.3f}",
    ]
    for key in ("lp_solves", "milp_solves"):
        if key in result.stats:
            lines.append(f"{key}: {result.stats[key]}")
    if result.plan is not None:
        for n in tree.ids:
            built = result.plan.built(n)
            lines.append(f"node {n} (stage {tree.node(n).stage}): {' '.join(built) if built else '-'}")
    return "\n".join(lines) + "\n"


def write_reports(result: SolveResult, out_dir: str | Path, tree: ScenarioTree) -> dict[str, Path]:
    """Write plan.csv, convergence.csv, summary.txt and uc_costs.csv into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in ("plan.csv", "convergence.csv", "summary.txt", "uc_costs.csv")}
    write_plan(paths["plan.csv"], result.plan, tree)
    write_convergence(paths["convergence.csv"], result)
    paths["summary.txt"].write_text(summary_text(result, tree), encoding="utf-8")
    write_uc_costs(paths["uc_costs.csv"], result, tree)
    return paths
