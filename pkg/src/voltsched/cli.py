"""Command-line frontend.

Subcommands: generate, solve, evaluate, cross-eval, export-mps, bench,
plot. Exit codes: 0 on success, 2 when an instance is infeasible or no
solution was found, 1 on usage or I/O errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import bench, exact, instgen
from .construct import NoSolutionFound
from .core import check_feasibility, evaluate_tec
from .exact import MilpSearchConfig, SolveStatus
from .ils import IlsConfig, run_ils

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_SOLUTION = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_ERROR)


def _deterministic_requested(args) -> bool:
    return bool(getattr(args, "deterministic", False)) or os.environ.get(
        "VOLT_SCHED_DETERMINISTIC"
    ) == "1"


def cmd_generate(args) -> int:
    params = instgen.GenParams(
        num_jobs=args.jobs,
        num_machines=args.machines,
        num_slots=args.slots,
        saturation=args.saturation,
        seed=args.seed,
        pv_peak=args.pv_peak,
    )
    fixed, variable = instgen.generate_pair(params)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"inst_J{args.jobs}_I{args.machines}_T{args.slots}_nu{args.saturation}_s{args.seed}"
    fixed_path = out_dir / f"{stem}_fixed.json"
    variable_path = out_dir / f"{stem}_variable.json"
    instgen.write_instance(fixed, fixed_path)
    instgen.write_instance(variable, variable_path)
    print(fixed_path)
    print(variable_path)
    return EXIT_OK


def cmd_solve(args) -> int:
    instance = instgen.read_instance(args.instance)
    deterministic = _deterministic_requested(args)

    if args.method == "oracle":
        outcome = exact.oracle_enumerate(instance)
        return _report_exact(args, instance, outcome)
    if args.method == "exact":
        outcome = exact.solve_full(
            instance,
            time_limit_s=args.time_limit,
            node_limit=args.node_limit,
        )
        return _report_exact(args, instance, outcome)

    milp = MilpSearchConfig(node_limit=args.node_limit, deterministic=deterministic)
    if deterministic and milp.node_limit is None:
        milp = replace(milp, node_limit=100_000)
    config = IlsConfig(
        time_limit_s=args.time_limit if args.time_limit else 600.0,
        seed=args.seed,
        deterministic=deterministic,
        max_iterations=args.max_iterations,
        milp=milp,
    )
    try:
        report = run_ils(instance, config)
    except NoSolutionFound:
        print("no solution found")
        return EXIT_NO_SOLUTION
    print(f"TEC {report.best_tec:.6f} EUR ({report.termination}, "
          f"{len(report.iterations)} iterations)")
    if args.solution_out:
        instgen.write_solution(report.best, report.best_tec, args.solution_out)
    if args.report_out:
        Path(args.report_out).write_text(
            json.dumps(report.to_dict(), indent=1), encoding="utf-8"
        )
    return EXIT_OK


def _report_exact(args, instance, outcome) -> int:
    if outcome.incumbent is None:
        print(
            "no solution found"
            if outcome.status is SolveStatus.INFEASIBLE
            else f"no solution within budget ({outcome.status.value})"
        )
        return EXIT_NO_SOLUTION
    bound = "" if outcome.lower_bound is None else f" (bound {outcome.lower_bound:.6f})"
    print(f"TEC {outcome.upper_bound:.6f} EUR [{outcome.status.value}]{bound}")
    if args.solution_out:
        instgen.write_solution(outcome.incumbent, outcome.upper_bound, args.solution_out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    instance = instgen.read_instance(args.instance)
    if args.solution_format == "xvars":
        schedule = exact.read_solver_solution(args.solution)
    else:
        schedule, _ = instgen.read_solution(args.solution)
    unknown = [j for j in schedule.assignments if not 0 <= j < instance.num_jobs]
    if unknown:
        print(f"error: solution references unknown job ids {unknown}", file=sys.stderr)
        return EXIT_ERROR
    verdict = check_feasibility(instance, schedule)
    if not verdict.unscheduled:
        print(f"TEC {evaluate_tec(instance, schedule):.6f} EUR")
    print(
        f"feasible: {verdict.feasible}"
        f" | budget violations: {len(verdict.violations)}"
        f" | overlaps: {len(verdict.overlaps)}"
        f" | unscheduled: {len(verdict.unscheduled)}"
    )
    return EXIT_OK if verdict.feasible else EXIT_NO_SOLUTION


def cmd_cross_eval(args) -> int:
    fixed = instgen.read_instance(args.fixed_instance)
    variable = instgen.read_instance(args.variable_instance)
    schedule, _ = instgen.read_solution(args.solution)
    report = bench.cross_evaluate(fixed, schedule, variable)
    print(json.dumps(report.to_dict(), indent=1))
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=1), encoding="utf-8")
    return EXIT_OK


def cmd_export_mps(args) -> int:
    instance = instgen.read_instance(args.instance)
    fixings = {}
    if args.fix_solution:
        schedule, _ = instgen.read_solution(args.fix_solution)
        fixings = schedule.assignments
    model = exact.build_tif(instance, fixings)
    exact.export_mps(model, args.out)
    print(args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    data = json.loads(Path(args.suite).read_text(encoding="utf-8"))
    cases = [
        bench.suite_case_from_dict(entry, k) for k, entry in enumerate(data.get("cases", []))
    ]
    solvers = tuple(data.get("solvers", ("ils",)))
    rows = bench.run_suite(cases, solver_choices=solvers, jobs=args.jobs)
    bench.write_csv(rows, args.out)
    print(args.out)
    return EXIT_OK


def cmd_plot(args) -> int:
    instance = instgen.read_instance(args.instance)
    schedule, _ = instgen.read_solution(args.solution)
    if args.energy_out:
        bench.emit_energy_profile(instance, schedule, args.energy_out)
        print(args.energy_out)
    if args.gantt_out:
        bench.emit_gantt(instance, schedule, args.gantt_out)
        print(args.gantt_out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="voltsched", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a fixed/variable instance pair")
    p.add_argument("--jobs", type=int, required=True)
    p.add_argument("--machines", type=int, required=True)
    p.add_argument("--slots", type=int, required=True)
    p.add_argument("--saturation", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--pv-peak", type=float, default=instgen.DEFAULT_PV_PEAK)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="solve an instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--method", choices=("ils", "exact", "oracle"), default="ils")
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--node-limit", type=int, default=None)
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--solution-out", default=None)
    p.add_argument("--report-out", default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("evaluate", help="price and check a solution file")
    p.add_argument("--instance", required=True)
    p.add_argument("--solution", required=True)
    p.add_argument("--solution-format", choices=("json", "xvars"), default="json")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cross-eval", help="replay a fixed-consumption solution on its variable twin")
    p.add_argument("--fixed-instance", required=True)
    p.add_argument("--solution", required=True)
    p.add_argument("--variable-instance", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_cross_eval)

    p = sub.add_parser("export-mps", help="write the time-indexed model as MPS")
    p.add_argument("--instance", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fix-solution", default=None)
    p.set_defaults(func=cmd_export_mps)

    p = sub.add_parser("bench", help="run a benchmark suite file to CSV")
    p.add_argument("--suite", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plot", help="emit SVG plots for a solution")
    p.add_argument("--instance", required=True)
    p.add_argument("--solution", required=True)
    p.add_argument("--energy-out", default=None)
    p.add_argument("--gantt-out", default=None)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (instgen.InstanceFormatError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
