"""
Command line interface for the periodic-lmpc package.

Sub-commands run an experiment from a YAML config, re-emit or verify a
finished run directory, fit disturbance coefficients to a recorded
realization and sweep a scenario over several seeds.

Exit codes: 0 on success, 2 when a feasibility or cost property fails,
1 for every other error (usage, configuration, solver, files).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import pandas as pd

from lmpc_core.disturbance import fit_coefficients
from lmpc_core.exceptions import ArtifactError, ConfigError, LmpcError, TheoremViolationError

from . import get_version
from .config import ExperimentConfig, config_from_mapping, load_config
from .runner import run_experiment, verify_run
from .runner.utils import emit_report, format_summary, load_report
from .scenarios import SCENARIOS, get_scenario
from .types import SweepEntry

logger = logging.getLogger(__name__)

DEFAULT_LOG_PATH = Path("logs") / "periodic_lmpc.log"
DEFAULT_ITERATIONS = 20
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
SWEEP_FILE = "sweep.json"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PROPERTY_VIOLATION = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="periodic-lmpc",
        description="Run and check learning MPC experiments on periodic LTV benchmarks.",
    )
    parser.add_argument(
        "--log-file",
        type=Path,
        default=DEFAULT_LOG_PATH,
        help="Log file path (defaults to logs/periodic_lmpc.log).",
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="Echo INFO (-v) or DEBUG (-vv) log records to stderr.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    scenarios = sorted(SCENARIOS)

    run_parser = subparsers.add_parser("run", help="Run an experiment.")
    run_parser.add_argument("--config", type=Path, default=None, help="YAML experiment config.")
    run_parser.add_argument("--out", type=Path, default=None, help="Run directory.")
    run_parser.add_argument("--seed", type=int, default=None, help="Master seed (u64).")
    run_parser.add_argument("--iterations", type=int, default=None, help="Iterations J.")
    run_parser.add_argument("--scenario", choices=scenarios, default=None)

    report_parser = subparsers.add_parser("report", help="Re-emit the report of a run.")
    report_parser.add_argument("--run", type=Path, required=True, help="Run directory.")
    report_parser.add_argument("--format", choices=("csv", "json"), default="csv")
    report_parser.add_argument(
        "--out", type=Path, default=None, help="Output directory (defaults to the run directory)."
    )

    verify_parser = subparsers.add_parser("verify", help="Re-check a finished run directory.")
    verify_parser.add_argument("--run", type=Path, required=True, help="Run directory.")

    fit_parser = subparsers.add_parser(
        "fit", help="Fit disturbance coefficients to a recorded realization."
    )
    fit_parser.add_argument("--scenario", choices=scenarios, required=True)
    fit_parser.add_argument(
        "--csv", type=Path, required=True, help="Realization with columns w1..wd, T+1 rows."
    )

    sweep_parser = subparsers.add_parser("sweep", help="Run one experiment per seed.")
    sweep_parser.add_argument("--scenario", choices=scenarios, required=True)
    sweep_parser.add_argument("--seeds", type=int, nargs="+", required=True)
    sweep_parser.add_argument("--iterations", type=int, default=DEFAULT_ITERATIONS)
    sweep_parser.add_argument("--config", type=Path, default=None, help="Base YAML config.")
    sweep_parser.add_argument("--out", type=Path, default=Path("runs") / "sweep")
    sweep_parser.add_argument("--workers", type=int, default=None)

    subparsers.add_parser("version", help="Display the installed package version.")
    return parser


def configure_logging(log_file: Path, verbosity: int) -> None:
    """File handler at DEBUG plus a stderr handler at WARNING/INFO/DEBUG"""
    log_file.parent.mkdir(parents=True, exist_ok=True)
    formatter = logging.Formatter(LOG_FORMAT)
    file_handler = logging.FileHandler(log_file, encoding="utf-8")
    file_handler.setFormatter(formatter)
    file_handler.setLevel(logging.DEBUG)
    stream_handler = logging.StreamHandler(sys.stderr)
    stream_handler.setFormatter(formatter)
    stream_handler.setLevel(
        logging.DEBUG if verbosity >= 2 else logging.INFO if verbosity == 1 else logging.WARNING
    )
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()
    root.setLevel(logging.DEBUG)
    root.addHandler(file_handler)
    root.addHandler(stream_handler)


def _resolve_config(
    config_path: Optional[Path],
    *,
    out: Optional[Path] = None,
    seed: Optional[int] = None,
    iterations: Optional[int] = None,
    scenario: Optional[str] = None,
) -> ExperimentConfig:
    if config_path is not None:
        return load_config(config_path).with_cli_overrides(
            output_dir=out, seed=seed, iterations=iterations, scenario=scenario
        )
    if scenario is None or seed is None:
        raise ConfigError("without --config both --scenario and --seed are required")
    data: Dict[str, Any] = {
        "scenario": scenario,
        "seed": seed,
        "iterations": DEFAULT_ITERATIONS if iterations is None else iterations,
    }
    if out is not None:
        data["output_dir"] = out
    return config_from_mapping(data)


def _handle_run(args: argparse.Namespace) -> None:
    config = _resolve_config(
        args.config,
        out=args.out,
        seed=args.seed,
        iterations=args.iterations,
        scenario=args.scenario,
    )
    report = run_experiment(config)
    summary = json.loads((config.run_dir / "summary.json").read_text(encoding="utf-8"))
    print(format_summary(summary))
    print(f"\nRun directory: {config.run_dir} ({report.iterations} iterations)")


def _handle_report(run_dir: Path, fmt: str, out: Optional[Path]) -> None:
    report, _ = load_report(run_dir)
    for path in emit_report(report, out or run_dir, fmt):
        print(path)


def _handle_verify(run_dir: Path) -> None:
    result = verify_run(run_dir)
    for kind, count in sorted(result.checks.items()):
        print(f"{kind:<18} {count:>6}")
    for note in result.notes:
        print(f"note: {note}")
    print(f"OK: {result.total} checks passed")


def _handle_fit(scenario: str, csv_path: Path) -> None:
    spec = get_scenario(scenario)
    try:
        frame = pd.read_csv(csv_path)
    except (OSError, pd.errors.ParserError) as e:
        raise ArtifactError(f"failed to read {csv_path}: {e}")
    columns = [f"w{i + 1}" for i in range(spec.basis.channels)]
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ArtifactError(f"{csv_path} lacks columns {missing}")
    fit = fit_coefficients(spec.basis, frame[columns].to_numpy(dtype=float))
    for label, value in zip(spec.basis.labels, fit.theta):
        print(f"{label:<8} {value: .9f}")
    print(f"residual max-abs: {fit.residual_max_abs:.6e}")
    inside = spec.theta_domain.contains(fit.theta)
    print(f"theta in domain: {'yes' if inside else 'no'}")


def _sweep_worker(payload: Dict[str, Any]) -> SweepEntry:
    """Run one seed of a sweep in its own process"""
    config = config_from_mapping(payload)
    entry = SweepEntry(
        seed=config.seed,
        run_dir=str(config.run_dir),
        status="complete",
        max_late_difference=None,
        error=None,
    )
    try:
        entry["max_late_difference"] = run_experiment(config).max_difference()
    except LmpcError as e:
        entry["status"] = "incomplete"
        entry["error"] = f"{type(e).__name__}: {e}"
    return entry


def _handle_sweep(args: argparse.Namespace) -> int:
    base = _resolve_config(
        args.config,
        seed=args.seeds[0],
        iterations=args.iterations,
        scenario=args.scenario,
    )
    out = Path(args.out)
    payloads: List[Dict[str, Any]] = []
    for seed in args.seeds:
        data = base.model_dump(mode="json")
        data.update(seed=seed, output_dir=str(out / f"seed-{seed}"))
        payloads.append(data)
    with ProcessPoolExecutor(max_workers=args.workers) as executor:
        entries = list(executor.map(_sweep_worker, payloads))

    out.mkdir(parents=True, exist_ok=True)
    sweep_path = out / SWEEP_FILE
    try:
        sweep_path.write_text(json.dumps(entries, indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise ArtifactError(f"failed to write {sweep_path}: {e}")
    for entry in entries:
        late = entry["max_late_difference"]
        shown = "n/a" if late is None else f"{late:.6f}"
        print(f"seed {entry['seed']:>6}  {entry['status']:<10}  max |J - J*| (j >= 10): {shown}")
    print(f"\nSweep summary: {sweep_path}")
    failed = [entry for entry in entries if entry["status"] != "complete"]
    return EXIT_ERROR if failed else EXIT_OK


def _handle_version() -> None:
    print(get_version())


def app(argv: Iterable[str] | None = None) -> int:
    """Entry point for console script and `python -m periodic_lmpc`.

    Returns:
        process exit code
    """
    parser = _build_parser()
    try:
        args = parser.parse_args(None if argv is None else list(argv))
    except SystemExit as e:
        return EXIT_OK if not e.code else EXIT_ERROR

    if args.command == "version":
        _handle_version()
        return EXIT_OK

    configure_logging(args.log_file, args.verbose)
    try:
        if args.command == "run":
            _handle_run(args)
        elif args.command == "report":
            _handle_report(args.run, args.format, args.out)
        elif args.command == "verify":
            _handle_verify(args.run)
        elif args.command == "fit":
            _handle_fit(args.scenario, args.csv)
        elif args.command == "sweep":
            return _handle_sweep(args)
        else:  # pragma: no cover - argparse prevents reaching this
            parser.error(f"Unknown command: {args.command}")
    except TheoremViolationError as e:
        logger.error("property violation: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PROPERTY_VIOLATION
    except LmpcError as e:
        logger.error("%s: %s", type(e).__name__, e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK
