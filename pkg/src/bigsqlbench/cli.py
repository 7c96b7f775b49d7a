"""Command-line entry point: validate plans, run matrices, render reports."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .engine import EmbeddedEngine, EngineConfig
from .report import REPORT_FORMATS, render_report
from .runner import PlanValidationError, RunPlan, execute_plan, load_records, validate_plan
from .suite import (
    format_sf,
    generate_scaled_data,
    load_suite,
    materialize_golden,
    warehouse_schema,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bigsqlbench",
        description="Evaluate text-to-SQL agents: run episodes, account "
        "time and cost per stage, and report validity/efficiency metrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    plan_cmd = sub.add_parser("plan", help="plan-file operations")
    plan_sub = plan_cmd.add_subparsers(dest="plan_command", required=True)
    plan_validate = plan_sub.add_parser("validate", help="pre-flight check a plan")
    plan_validate.add_argument("--plan", required=True, type=Path)

    run_cmd = sub.add_parser("run", help="execute a run plan")
    run_cmd.add_argument("--plan", required=True, type=Path)
    run_cmd.add_argument("--output-dir", type=Path, default=None)
    run_cmd.add_argument("--repetitions", type=int, default=None)
    run_cmd.add_argument("--concurrency", type=int, default=None)
    run_cmd.add_argument("--seed", type=int, default=None)
    run_cmd.add_argument("--max-spend", type=float, default=None)

    report_cmd = sub.add_parser("report", help="render reports from records")
    report_cmd.add_argument("--records", required=True, type=Path)
    report_cmd.add_argument(
        "--format",
        default="json,csv,markdown,plotdata",
        help=f"comma-separated subset of {','.join(REPORT_FORMATS)}",
    )
    report_cmd.add_argument("--output-dir", required=True, type=Path)

    goldens_cmd = sub.add_parser("goldens", help="golden-result operations")
    goldens_sub = goldens_cmd.add_subparsers(dest="goldens_command", required=True)
    goldens_mat = goldens_sub.add_parser(
        "materialize", help="execute and cache golden results for a suite"
    )
    goldens_mat.add_argument("--suite", required=True, type=Path)
    goldens_mat.add_argument("--cache-dir", required=True, type=Path)
    goldens_mat.add_argument("--scale-factor", type=float, default=1.0)

    data_cmd = sub.add_parser("data", help="synthetic data operations")
    data_sub = data_cmd.add_subparsers(dest="data_command", required=True)
    data_gen = data_sub.add_parser("generate", help="generate scaled synthetic data")
    data_gen.add_argument("--scale-factor", required=True, type=float)
    data_gen.add_argument("--seed", type=int, default=0)
    data_gen.add_argument("--output-dir", required=True, type=Path)

    return parser


def _cmd_plan_validate(args: argparse.Namespace) -> int:
    plan = RunPlan.from_json_file(args.plan)
    problems = validate_plan(plan)
    if problems:
        for problem in problems:
            print(f"INVALID: {problem}")
        return 1
    print("plan OK")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    plan = RunPlan.from_json_file(args.plan)
    if args.output_dir is not None:
        plan.output_dir = args.output_dir
    if args.repetitions is not None:
        plan.repetitions = args.repetitions
    if args.concurrency is not None:
        plan.concurrency = args.concurrency
    if args.seed is not None:
        plan.seed = args.seed
    if args.max_spend is not None:
        plan.max_spend_usd = args.max_spend
    try:
        output = execute_plan(plan)
    except PlanValidationError as exc:
        print(f"plan invalid: {exc}")
        return 1
    print(
        f"ran {len(output.episodes)} episodes "
        f"({len(output.skipped)} skipped, "
        f"{len(output.unusable_cases)} unusable cases)"
    )
    print(f"records: {output.records_path}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    formats = [f.strip() for f in args.format.split(",") if f.strip()]
    for fmt in formats:
        if fmt not in REPORT_FORMATS:
            print(f"unknown format: {fmt}")
            return 1
    episodes = load_records(args.records)
    if not episodes:
        print("no episodes in records file")
        return 1
    written = render_report(episodes, formats, args.output_dir)
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_goldens_materialize(args: argparse.Namespace) -> int:
    cases = load_suite(args.suite, scale_factor=args.scale_factor)
    failures = 0
    for case in cases:
        if not case.usable:
            print(f"{case.case_id}: UNUSABLE ({case.error})")
            failures += 1
            continue
        with EmbeddedEngine(
            EngineConfig(data_dir=case.data_dir, database=case.database)
        ) as engine:
            result, t_gold = materialize_golden(
                case, engine, cache_dir=args.cache_dir,
                scale_factor=args.scale_factor,
            )
        print(
            f"{case.case_id}: {result.n_rows} row(s), t_gold {t_gold * 1e3:.3f} ms"
        )
    return 0 if failures == 0 else 1


def _cmd_data_generate(args: argparse.Namespace) -> int:
    dataset = generate_scaled_data(
        warehouse_schema(), args.scale_factor, args.seed, args.output_dir
    )
    for table, count in dataset.row_counts.items():
        print(f"{table}: {count} rows")
    print(f"generated sf={format_sf(args.scale_factor)} under {dataset.out_dir}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "plan":
        return _cmd_plan_validate(args)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "report":
        return _cmd_report(args)
    if args.command == "goldens":
        return _cmd_goldens_materialize(args)
    if args.command == "data":
        return _cmd_data_generate(args)
    return 1


if __name__ == "__main__":
    sys.exit(main())
