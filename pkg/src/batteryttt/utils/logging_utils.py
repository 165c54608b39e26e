"""
CSV run log for adaptation experiments.

Each `adapt` and `ablate` run appends one row to logs/runs.csv with:
- Run metadata (timestamp, command, mode, ssl, mask ratio, seed)
- Accuracy (samples, MAE, RMSE)
- Cost (trainable parameters, mean per-inference latency)
"""

import csv
import os
from datetime import datetime
from pathlib import Path
from typing import Any, Optional

import pandas as pd

from ..schemas.training import AdaptationReport
from .config_loader import get_log_path, is_logging_enabled

RUN_LOG_COLUMNS = [
    "timestamp",
    "command",
    "mode",
    "ssl",
    "mask_ratio",
    "seed",
    "samples",
    "mae",
    "rmse",
    "trainable_params",
    "mean_ms",
    "notes",
]


def _resolve_log_path(log_path: Optional[Path] = None) -> Path:
    """Resolve the run-log path, creating its directory if needed."""
    path = Path(log_path) if log_path is not None else get_log_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _init_csv_if_needed(log_path: Path) -> None:
    """Initialize CSV with headers if file doesn't exist."""
    if not log_path.exists():
        with open(log_path, "w", newline="") as f:
            csv.writer(f).writerow(RUN_LOG_COLUMNS)


def _fmt(value: Optional[float]) -> Any:
    return "" if value is None else round(float(value), 6)


def log_run(
    command: str,
    report: AdaptationReport,
    seed: Optional[int] = None,
    notes: str = "",
    log_path: Optional[Path] = None,
) -> Optional[Path]:
    """
    Append one adaptation run to the run log.

    Args:
        command: CLI command that produced the report (adapt, ablate)
        report: Finished adaptation report
        seed: Seed of the run, when known
        notes: Free text (row label, error message)
        log_path: Override of the configured log file

    Returns:
        Path to the log, or None when logging is disabled
    """
    if log_path is None and not is_logging_enabled():
        return None
    path = _resolve_log_path(log_path)
    _init_csv_if_needed(path)

    cfg = report.config
    with open(path, "a", newline="") as f:
        csv.writer(f).writerow(
            [
                datetime.now().isoformat(),
                command,
                cfg.get("mode", ""),
                cfg.get("ssl", ""),
                cfg.get("mask_ratio", ""),
                "" if seed is None else seed,
                len(report.samples),
                _fmt(report.mae),
                _fmt(report.rmse),
                report.trainable_params,
                round(report.mean_ms, 3),
                notes,
            ]
        )
    return path


def get_log_summary(log_path: Optional[Path] = None) -> dict[str, Any]:
    """
    Summarize the run log.

    Returns:
        Dict with run counts, per-mode mean MAE/RMSE and mean latency
    """
    path = Path(log_path) if log_path is not None else get_log_path()
    if not path.exists():
        return {"total_runs": 0, "message": "No logs found"}

    try:
        df = pd.read_csv(path)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        return {"error": f"Failed to read logs: {e}"}

    if len(df) == 0:
        return {"total_runs": 0, "message": "Log file is empty"}

    summary: dict[str, Any] = {
        "total_runs": len(df),
        "commands": df["command"].value_counts().to_dict(),
        "modes": df["mode"].fillna("").value_counts().to_dict(),
        "mean_latency_ms": float(df["mean_ms"].mean()),
    }
    scored = df.dropna(subset=["mae"])
    if len(scored) > 0:
        by_mode = scored.groupby(["mode", "ssl"], dropna=False)[["mae", "rmse"]].mean()
        summary["mean_metrics"] = {
            f"{mode}/{ssl}": {"mae": float(row["mae"]), "rmse": float(row["rmse"])}
            for (mode, ssl), row in by_mode.iterrows()
        }
    return summary


def clear_logs(log_path: Optional[Path] = None) -> None:
    """Delete the run log (use with caution)."""
    path = Path(log_path) if log_path is not None else get_log_path()
    if path.exists():
        os.remove(path)
