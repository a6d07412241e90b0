#!/usr/bin/env python3
"""
dbpinn command line
    python -m dbpinn run <config>         train every (method, seed) cell and write artifacts
    python -m dbpinn validate <config>    print the config with all defaults filled in
    python -m dbpinn summarize <dir>      rebuild summary.csv / summary.md from run.json files
Exit codes: 0 success, 1 configuration error, 2 run failures
"""

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from dbpinn.config.schema import ExperimentConfig, TrainConfig, parse_config, serialize_config
from dbpinn.config.settings import get_settings
from dbpinn.core import ConfigurationError, TrainingAborted
from dbpinn.core.metrics import write_pointwise_csv
from dbpinn.core.nn import save_checkpoint
from dbpinn.core.trainer import RunRecord, train
from dbpinn.utils.logger import attach_log_dir, detach_log_dirs, get_logger
from dbpinn.utils.report import SummaryReport

logger = get_logger("dbpinn.cli")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILED = 2

FLOAT_FORMAT = "%.17g"
SUMMARY_COLUMNS = ["method", "problem", "runs", "failed", "l2re_mean", "l2re_std", "mae_mean", "mae_std"]


def run_dir_for(out_dir: Path, method_label: str, seed: int) -> Path:
    return Path(out_dir) / method_label / f"seed_{seed}"


def write_run_artifacts(run_dir: Path, record: RunRecord, method_label: str, seed: int) -> Dict[str, Any]:
    """history.csv, checkpoint.bin, pointwise_error.csv and run.json for one run"""
    run_dir.mkdir(parents=True, exist_ok=True)
    record.to_frame().to_csv(run_dir / "history.csv", index=False, float_format=FLOAT_FORMAT)
    if record.network is not None:
        save_checkpoint(run_dir / "checkpoint.bin", record.network, record.steps_completed)
    if record.evaluation is not None:
        write_pointwise_csv(run_dir / "pointwise_error.csv", record.evaluation)

    outcome = {
        "method": method_label,
        "problem": record.config["problem"],
        "seed": seed,
        "status": "failed" if record.failed else "ok",
        "diagnostic": record.diagnostic,
        "steps_completed": record.steps_completed,
        "final_l2re": record.final_l2re,
        "final_mae": record.final_mae,
    }
    with open(run_dir / "run.json", "w", encoding="utf-8") as f:
        json.dump(outcome, f, indent=2, sort_keys=True)
        f.write("\n")
    return outcome


def execute_run(train_config: Dict[str, Any], method_label: str, out_dir: str) -> Dict[str, Any]:
    """Train one cell and write its artifacts; runs inside worker processes"""
    config = TrainConfig(**train_config)
    run_dir = run_dir_for(Path(out_dir), method_label, config.seed)
    try:
        record = train(config)
    except TrainingAborted as e:
        record = e.record
    outcome = write_run_artifacts(run_dir, record, method_label, config.seed)
    outcome["wall_time"] = record.wall_time
    return outcome


def _sample_std(values: np.ndarray) -> float:
    # a single run has no spread
    if values.size < 2:
        return 0.0
    return float(np.std(values, ddof=1))


def summarize_outcomes(outcomes: Sequence[Dict[str, Any]], method_order: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """Mean and sample standard deviation of final errors per method over its successful runs"""
    frame = pd.DataFrame(list(outcomes))
    if method_order is None:
        method_order = sorted(frame["method"].unique()) if len(frame) else []

    rows = []
    for method in method_order:
        cell = frame[frame["method"] == method].sort_values("seed") if len(frame) else frame
        ok = cell[cell["status"] == "ok"]
        l2re_values = ok["final_l2re"].to_numpy(dtype=np.float64)
        mae_values = ok["final_mae"].to_numpy(dtype=np.float64)
        rows.append(
            {
                "method": method,
                "problem": cell["problem"].iloc[0] if len(cell) else "",
                "runs": int(len(cell)),
                "failed": int(len(cell) - len(ok)),
                "l2re_mean": float(np.mean(l2re_values)) if l2re_values.size else np.nan,
                "l2re_std": _sample_std(l2re_values) if l2re_values.size else np.nan,
                "mae_mean": float(np.mean(mae_values)) if mae_values.size else np.nan,
                "mae_std": _sample_std(mae_values) if mae_values.size else np.nan,
            }
        )
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def write_summary(out_dir: Path, summary: pd.DataFrame, outcomes: Sequence[Dict[str, Any]]) -> None:
    summary.to_csv(out_dir / "summary.csv", index=False, float_format=FLOAT_FORMAT)
    failures = [
        f"{o['method']} seed {o['seed']}: {o['diagnostic']}" for o in outcomes if o["status"] != "ok"
    ]
    SummaryReport(out_dir).write(summary, failures)


def has_failed_cell(summary: pd.DataFrame) -> bool:
    return bool(((summary["failed"] == summary["runs"]) & (summary["runs"] > 0)).any())


def run_experiment(config: ExperimentConfig) -> pd.DataFrame:
    """
    Train every (method, seed) cell of the sweep and write all artifacts.

    Returns the summary table with one row per method in the requested
    order. Failed runs are recorded, not raised.
    """
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    attach_log_dir(out_dir / "logs")
    try:
        return _run_cells(config, out_dir)
    finally:
        detach_log_dirs()


def _run_cells(config: ExperimentConfig, out_dir: Path) -> pd.DataFrame:
    (out_dir / "config.json").write_text(serialize_config(config), encoding="utf-8")

    cells = config.runs()
    started = datetime.now(timezone.utc)
    logger.info(
        "Experiment started",
        problem=config.problem,
        methods=[m.label for m in config.methods],
        seeds=config.seeds,
        workers=config.workers,
        output_dir=str(out_dir),
    )

    jobs = [(cfg.model_dump(mode="json"), method.label, str(out_dir)) for method, _, cfg in cells]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(execute_run, *job) for job in jobs]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [execute_run(*job) for job in jobs]

    for outcome in outcomes:
        if outcome["status"] != "ok":
            logger.warning(
                "Run failed", method=outcome["method"], seed=outcome["seed"], diagnostic=outcome["diagnostic"]
            )

    summary = summarize_outcomes(outcomes, [m.label for m in config.methods])
    write_summary(out_dir, summary, outcomes)
    for row in summary.itertuples(index=False):
        logger.metric(f"{row.method}/l2re_mean", row.l2re_mean)

    # wall-clock data lives here and in logs/ only
    metadata = {
        "started": started.isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(),
        "wall_time": {f"{o['method']}/seed_{o['seed']}": o["wall_time"] for o in outcomes},
    }
    with open(out_dir / "metadata.json", "w", encoding="utf-8") as f:
        json.dump(metadata, f, indent=2)
        f.write("\n")

    logger.success("Experiment finished", runs=len(outcomes), failed=int(summary["failed"].sum()))
    return summary


def summarize(out_dir) -> pd.DataFrame:
    """Rebuild the summary of an experiment directory from its run.json files"""
    out_dir = Path(out_dir)
    if not out_dir.is_dir():
        raise ConfigurationError(f"summarize: {out_dir} is not a directory")
    outcomes = []
    for path in sorted(out_dir.glob("*/seed_*/run.json")):
        with open(path, encoding="utf-8") as f:
            outcomes.append(json.load(f))
    if not outcomes:
        raise ConfigurationError(f"summarize: no run.json files under {out_dir}")

    method_order = None
    config_path = out_dir / "config.json"
    if config_path.exists():
        try:
            method_order = [m.label for m in parse_config(config_path).methods]
        except ConfigurationError:
            method_order = None
    if method_order is not None:
        found = {o["method"] for o in outcomes}
        method_order = [m for m in method_order if m in found]
        method_order += sorted(found - set(method_order))

    summary = summarize_outcomes(outcomes, method_order)
    write_summary(out_dir, summary, outcomes)
    return summary


def _resolve_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    """--output-dir beats DBPINN_OUTPUT_DIR beats the file; same for workers"""
    settings = get_settings()
    update: Dict[str, Any] = {}
    output_dir = getattr(args, "output_dir", None) or settings.output_dir
    if output_dir:
        update["output_dir"] = str(output_dir)
    workers = getattr(args, "workers", None)
    if workers is None:
        workers = settings.workers
    if workers is not None:
        if workers < 1:
            raise ConfigurationError(f"workers: must be >= 1, got {workers}")
        update["workers"] = int(workers)
    return config.model_copy(update=update) if update else config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dbpinn",
        description="Train PINNs with equal, gradient-statistics and dual-balanced loss weighting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config", type=Path)
    run.add_argument("--output-dir", type=Path, default=None, help="overrides output_dir and DBPINN_OUTPUT_DIR")
    run.add_argument("--workers", type=int, default=None, help="parallel training processes")

    validate = sub.add_parser("validate", help="validate a config and echo it with defaults")
    validate.add_argument("config", type=Path)

    summarize_cmd = sub.add_parser("summarize", help="rebuild the summary of an output directory")
    summarize_cmd.add_argument("directory", type=Path)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            config = parse_config(args.config)
            sys.stdout.write(serialize_config(config))
            return EXIT_OK

        if args.command == "summarize":
            summary = summarize(args.directory)
        else:
            config = _resolve_overrides(parse_config(args.config), args)
            summary = run_experiment(config)
    except ConfigurationError as e:
        logger.error("Configuration error", error=str(e))
        sys.stderr.write(f"configuration error: {e}\n")
        return EXIT_CONFIG

    sys.stdout.write(summary.to_string(index=False) + "\n")
    if has_failed_cell(summary):
        logger.error("Every run of at least one method failed")
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
