"""
Report rendering: adaptation reports to aligned text, CSV and Excel.

Aggregates are always recomputed from the per-sample records and checked
against the totals stored in the report.
"""

import logging
import math
from pathlib import Path
from typing import Optional, Sequence

import pandas as pd

from ..core.metrics import mae, rmse
from ..exceptions import ContractError
from ..schemas.training import AdaptationReport
from ..utils.file_utils import ensure_output_directory, save_table_excel
from ..utils.json_utils import load_model_document

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["report", "mode", "ssl", "mask_ratio", "reset_policy", "samples",
                   "mae", "rmse", "trainable_params", "mean_ms"]

# Stored totals are rounded to JSON floats; allow for that.
_TOTALS_RTOL = 1e-9


def _close(stored: Optional[float], recomputed: Optional[float]) -> bool:
    if stored is None or recomputed is None:
        return stored is None and recomputed is None
    return math.isclose(stored, recomputed, rel_tol=_TOTALS_RTOL, abs_tol=1e-12)


def recompute_totals(report: AdaptationReport) -> dict[str, Optional[float]]:
    """
    MAE, RMSE and total time from the per-sample records.

    Raises:
        ContractError: On NaN predictions or labels
    """
    scored = [s for s in report.samples if s.true_soh is not None]
    y_true = [s.true_soh for s in scored]
    y_pred = [s.predicted_soh for s in scored]
    return {
        "mae": mae(y_true, y_pred) if scored else None,
        "rmse": rmse(y_true, y_pred) if scored else None,
        "total_ms": float(sum(s.wall_ms for s in report.samples)),
    }


def verify_totals(report: AdaptationReport, name: str = "report") -> dict[str, Optional[float]]:
    """
    Recompute totals and require them to match the stored ones.

    Raises:
        ContractError: If a stored total disagrees with its recomputation
    """
    totals = recompute_totals(report)
    for key in ("mae", "rmse", "total_ms"):
        if not _close(getattr(report, key), totals[key]):
            raise ContractError(
                f"{name}: stored {key} {getattr(report, key)} != recomputed {totals[key]}",
                {"report": name, "field": key},
            )
    return totals


class ReportService:
    """Renders one or more adaptation reports as tables."""

    def load(self, paths: Sequence[str | Path]) -> dict[str, AdaptationReport]:
        return {str(p): load_model_document(p, AdaptationReport) for p in paths}

    def summary(self, reports: dict[str, AdaptationReport]) -> pd.DataFrame:
        """One row per report, metrics recomputed from its samples."""
        rows = []
        for name, report in reports.items():
            totals = verify_totals(report, name)
            cfg = report.config
            rows.append(
                {
                    "report": Path(name).stem if name.endswith(".json") else name,
                    "mode": cfg.get("mode", ""),
                    "ssl": cfg.get("ssl", ""),
                    "mask_ratio": cfg.get("mask_ratio"),
                    "reset_policy": cfg.get("reset_policy", ""),
                    "samples": len(report.samples),
                    "mae": totals["mae"],
                    "rmse": totals["rmse"],
                    "trainable_params": report.trainable_params,
                    "mean_ms": totals["total_ms"] / len(report.samples) if report.samples else 0.0,
                }
            )
        return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)

    def samples(self, reports: dict[str, AdaptationReport]) -> pd.DataFrame:
        """Long table of per-sample records across reports (plot-ready)."""
        frames = []
        for name, report in reports.items():
            frame = pd.DataFrame(
                [
                    {
                        "report": Path(name).stem,
                        "cell_id": s.cell_id,
                        "cycle": s.cycle,
                        "true_soh": s.true_soh,
                        "predicted_soh": s.predicted_soh,
                        "ssl_first": s.ssl_losses[0] if s.ssl_losses else None,
                        "ssl_last": s.ssl_losses[-1] if s.ssl_losses else None,
                        "wall_ms": s.wall_ms,
                    }
                    for s in report.samples
                ]
            )
            frames.append(frame)
        return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()

    def render_text(self, summary: pd.DataFrame) -> str:
        """Aligned-column text table."""
        if summary.empty:
            return "(no reports)\n"
        return summary.to_string(
            index=False, na_rep="-", float_format=lambda v: f"{v:.4f}"
        ) + "\n"

    def write(
        self,
        reports: dict[str, AdaptationReport],
        out: Optional[str | Path] = None,
        csv_path: Optional[str | Path] = None,
        xlsx_path: Optional[str | Path] = None,
    ) -> str:
        """
        Render the summary; optionally write it as text, CSV and an Excel
        workbook (summary and per-sample sheets).

        Returns:
            The aligned text table
        """
        summary = self.summary(reports)
        text = self.render_text(summary)
        if out is not None:
            ensure_output_directory(out).write_text(text, encoding="utf-8")
        if csv_path is not None:
            summary.to_csv(ensure_output_directory(csv_path), index=False)
        if xlsx_path is not None:
            save_table_excel({"summary": summary, "samples": self.samples(reports)}, xlsx_path)
        logger.info(f"Rendered {len(reports)} report(s)")
        return text
