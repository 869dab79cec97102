"""
CLI Module - Command-Line Entry Point
classify, simulate, sweep, verify and check-env subcommands

Run with: python -m backend.cli <command> [options]
Exit codes: 0 success, 2 validation error, 3 runtime failure
"""

import argparse
import json
import logging
import os
import sys
from fractions import Fraction
from typing import List, Optional

from scipy import fft

from backend.fields import discretize
from backend.functionals import functional_report
from backend.orchestrator import SUITES, SWEEP_HEADER, classify_report, run_mass_sweep, run_suite
from backend.reporting import (
    generate_run_report,
    generate_suite_report,
    summarize_checks,
    write_csv,
    write_json,
)
from backend.snapshots import save_png, write_field_csv, write_plad
from backend.solver import run, summarize
from backend.utils import (
    config_hash,
    configure_logging,
    get_setup_instructions,
    get_thread_count,
    load_run_config,
    validate_environment,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def cmd_classify(args) -> int:
    report = classify_report(args.d, args.p, args.alpha, args.lam)
    print(json.dumps(report, indent=2, default=str))
    return EXIT_OK


def _write_field_exports(directory: str, trajectory, run_config) -> None:
    """Per-cell CSVs of the recorded fields and one functional-report row per field."""
    solver = run_config.solver
    params = solver.params
    fields = sorted(trajectory.snapshots.items()) + [(trajectory.status_time, trajectory.final)]
    alpha = params.alpha if params.lam > 0.0 else None
    eps = solver.kernel.eps or None
    reports = [(t, functional_report(f, params.p, solver.resolved_moment_k, alpha, eps=eps)) for t, f in fields]
    header = ("t",) + reports[0][1].header()
    write_csv(os.path.join(directory, run_config.outputs.functionals_csv), header,
              ((t,) + report.to_row() for t, report in reports), run_config.digest)
    if run_config.outputs.field_csv:
        for t, snapshot in sorted(trajectory.snapshots.items()):
            write_field_csv(os.path.join(directory, f"snapshot_t{t:.6g}.csv"), snapshot)
        write_field_csv(os.path.join(directory, "final.csv"), trajectory.final)


def cmd_simulate(args) -> int:
    run_config = load_run_config(args.config)
    outputs = run_config.outputs
    directory = args.output_dir or outputs.directory

    logger.info("Step 1: Discretizing the initial profile")
    initial = discretize(run_config.initial, run_config.solver.grid)

    logger.info("Step 2: Running the solver")
    trajectory = run(initial, run_config.solver)

    logger.info("Step 3: Writing outputs to %s", directory)
    trajectory.to_csv(os.path.join(directory, outputs.trajectory_csv))
    summary = summarize(trajectory)
    summary["run_config_sha256"] = run_config.digest
    if outputs.snapshots:
        for t, snapshot in sorted(trajectory.snapshots.items()):
            write_plad(os.path.join(directory, f"snapshot_t{t:.6g}.plad"), snapshot)
        write_plad(os.path.join(directory, "final.plad"), trajectory.final)
    _write_field_exports(directory, trajectory, run_config)
    if outputs.png:
        save_png(os.path.join(directory, "final.png"), trajectory.final)
    write_json(os.path.join(directory, outputs.summary_json), summary)

    print(generate_run_report(summary))
    return EXIT_OK


def real(text: str) -> float:
    """Decimal or exact rational such as 5/3."""
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError) as e:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from e


def _parse_multipliers(raw: str) -> List[float]:
    try:
        return [float(v) for v in raw.split(",") if v.strip()]
    except ValueError as e:
        raise ValueError(f"multipliers must be comma-separated numbers: {raw!r}") from e


def cmd_sweep(args) -> int:
    run_config = load_run_config(args.config)
    multipliers = _parse_multipliers(args.multipliers)
    rows = run_mass_sweep(run_config.solver, run_config.initial, multipliers)
    write_csv(args.output, SWEEP_HEADER, ([row[c] for c in SWEEP_HEADER] for row in rows), run_config.digest)
    for row in rows:
        print(f"{row['multiplier']:>8g}  M0/Mc={row['M0_over_Mc']:.4f}  {row['status']}")
    logger.info("[OK] Sweep summary written to %s", args.output)
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_suite(args.suite, samples=args.samples, seed=args.seed)
    digest = config_hash({"suite": args.suite, "samples": args.samples, "seed": args.seed})
    header = results[0].CSV_HEADER if results else ("field_id", "check", "lhs", "rhs", "ratio", "pass")
    write_csv(args.output, header, (r.to_row() for r in results), digest)
    verdict = summarize_checks(results)
    print(generate_suite_report(args.suite, verdict))
    return EXIT_OK if verdict["status"] == "success" else EXIT_RUNTIME


def cmd_check_env(args) -> int:
    checks = validate_environment()
    for name, ok in checks.items():
        print(f"{'[OK]' if ok else '[ERROR]'} {name}")
    if all(checks.values()):
        return EXIT_OK
    print(get_setup_instructions())
    return EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plad", description="p-Laplacian aggregation-diffusion laboratory")
    parser.add_argument("--log-level", default=None, help="overrides PLAD_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    classify = sub.add_parser("classify", help="regime, exponents, sharp constants and critical mass")
    classify.add_argument("--d", type=int, required=True)
    classify.add_argument("--p", type=real, required=True)
    classify.add_argument("--alpha", type=real, required=True)
    classify.add_argument("--lambda", dest="lam", type=real, required=True)
    classify.set_defaults(handler=cmd_classify)

    simulate = sub.add_parser("simulate", help="run one JSON configuration")
    simulate.add_argument("config")
    simulate.add_argument("--output-dir", default=None)
    simulate.set_defaults(handler=cmd_simulate)

    sweep = sub.add_parser("sweep", help="rerun a configuration at multiples of the critical mass")
    sweep.add_argument("config")
    sweep.add_argument("--multipliers", required=True, help="comma-separated, e.g. 0.25,0.5,0.9")
    sweep.add_argument("--output", default="sweep.csv")
    sweep.set_defaults(handler=cmd_sweep)

    verify = sub.add_parser("verify", help="run a verification suite")
    verify.add_argument("--suite", choices=SUITES, required=True)
    verify.add_argument("--samples", type=int, default=100)
    verify.add_argument("--seed", type=int, default=7)
    verify.add_argument("--output", default="verify.csv")
    verify.set_defaults(handler=cmd_verify)

    check_env = sub.add_parser("check-env", help="report installed dependencies")
    check_env.set_defaults(handler=cmd_check_env)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        with fft.set_workers(get_thread_count()):
            return args.handler(args)
    except ValueError as e:
        logger.error("[ERROR] %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as e:
        logger.exception("[ERROR] %s failed", args.command)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
