"""Command-line interface: ``capexp plan`` and ``capexp evaluate``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ALGORITHMS, RunConfig
from .formulations import ModelTooLarge
from .grid import GridDataError
from .ncd.engine import CONVERGED
from .reports import progress_line, read_plan, write_reports
from .runner import build_instance, run
from .scenario import select_days
from .solver import ContractError, SolverError

EXIT_OK, EXIT_ERROR, EXIT_TIME_LIMIT = 0, 1, 2


def _instance_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--system", default="sixbus.json", help="system JSON file or packaged fixture name")
    p.add_argument("--stages", type=int, default=3)
    p.add_argument("--days", default="1", help="number of representative days (1-8) or comma-separated names")
    p.add_argument("--scenarios", type=int, default=10, help="fine scenarios per node and day")
    p.add_argument("--hours", type=int, default=24)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--voll", type=float, default=10_000.0, help="value of lost load [$/MWh]")
    p.add_argument("--discount", type=float, default=1.0, help="per-stage discount factor")
    p.add_argument("--reserve-margin", type=float, default=None)
    p.add_argument("--segments", type=int, default=4, help="piecewise-linear fuel cost segments")
    p.add_argument("--threads", type=int, default=1, help="worker threads (NCD_THREADS overrides)")
    p.add_argument("--deterministic-lower-level", action="store_true",
                   help="replace sampled scenarios by their mean profile")
    p.add_argument("--backend", default=None, help="LP/MILP backend (highs or builtin)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="capexp", description="Multistage stochastic capacity expansion planning.")
    sub = parser.add_subparsers(dest="command", required=True)

    plan = sub.add_parser("plan", help="solve a planning instance and write reports")
    _instance_args(plan)
    plan.add_argument("--algorithm", choices=ALGORITHMS, default="ncd")
    plan.add_argument("--gap", type=float, default=0.01, help="relative optimality gap")
    plan.add_argument("--time-limit", type=float, default=None, help="wall-clock limit [s]")
    plan.add_argument("--no-warm-start", action="store_true", help="drop cuts and cached values every iteration")
    plan.add_argument("--multicut", action="store_true", help="one recourse estimate per scenario")
    plan.add_argument("--no-branching", action="store_true", help="stop instead of branching on fractional builds")
    plan.add_argument("--max-vars", type=int, default=None, help="size guard for the direct method")
    plan.add_argument("--dump-models", default=None, metavar="DIR", help="write LP files of the models solved")
    plan.add_argument("--out", default="out", help="output directory")
    plan.add_argument("--quiet", action="store_true", help="suppress the progress stream")

    ev = sub.add_parser("evaluate", help="price a fixed plan on freshly sampled scenarios")
    _instance_args(ev)
    ev.add_argument("--plan", required=True, help="plan.csv from a previous run")
    ev.add_argument("--eval-seed", type=int, default=None, help="scenario seed (default: --seed + 1)")
    ev.add_argument("--out", default=None, help="directory for evaluation.txt")
    return parser


def _config(args) -> RunConfig:
    kw = dict(system=args.system, stages=args.stages, days=select_days(args.days), scenarios=args.scenarios,
              hours=args.hours, seed=args.seed, voll=args.voll, discount=args.discount,
              reserve_margin=args.reserve_margin, segments=args.segments, threads=args.threads,
              deterministic_lower_level=args.deterministic_lower_level, backend=args.backend)
    if args.command == "plan":
        kw.update(algorithm=args.algorithm, gap=args.gap, time_limit=args.time_limit,
                  warm_start=not args.no_warm_start, multicut=args.multicut, branching=not args.no_branching,
                  dump_models=args.dump_models)
        if args.max_vars is not None:
            kw["max_vars"] = args.max_vars
    return RunConfig(**kw)


def _plan(args) -> int:
    config = _config(args)
    instance = build_instance(config)
    progress = None if args.quiet else (lambda row: print(progress_line(row), flush=True))
    if progress is not None:
        print("iter,lb,ub,gap,columns_added,cuts_added,seconds", flush=True)
    result = run(config, instance, progress=progress)
    paths = write_reports(result, args.out, instance.tree)
    print(f"{result.algorithm}: {result.status}, objective {result.objective:.6g}, gap {result.gap:.4%}; "
          f"reports in {paths['plan.csv'].parent}", file=sys.stderr)
    if result.status == CONVERGED:
        return EXIT_OK
    if result.plan is not None:
        return EXIT_TIME_LIMIT
    print(f"error: no feasible plan ({result.status})", file=sys.stderr)
    return EXIT_ERROR


def _evaluate(args) -> int:
    from .baselines import evaluate_plan
    config = _config(args)
    seed = args.seed + 1 if args.eval_seed is None else args.eval_seed
    instance = build_instance(config, seed=seed)
    plan = read_plan(args.plan, instance.system, instance.tree)
    ev = evaluate_plan(instance.system, instance.tree, plan, instance.scenarios, config=config)
    text = (f"scenario_seed: {seed}\ncapital_cost: {ev.capital!r}\noperating_cost: {ev.operating!r}\n"
            f"total_cost: {ev.total!r}\nfeasible: {str(ev.feasible).lower()}\n")
    sys.stdout.write(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "evaluation.txt").write_text(text, encoding="utf-8")
    return EXIT_OK if ev.feasible else EXIT_ERROR


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help exits 0, usage errors exit 2
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _plan(args) if args.command == "plan" else _evaluate(args)
    except (ModelTooLarge, GridDataError, ValueError, OSError, SolverError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
