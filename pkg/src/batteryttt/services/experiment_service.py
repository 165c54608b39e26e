"""
Seeded source -> target ablation harness.

Per seed: simulate both fleets, pretrain and probe on the source, then run
every ablation row, the test-time mask sweep and the lambda sweep on the
partially observed target stream.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from ..core.model import ModelState
from ..schemas.experiment import AblationRow, ExperimentConfig
from ..schemas.model import ModelConfig
from ..schemas.features import FeatureDataset
from ..schemas.training import AdaptationReport, LossConfig, TtaConfig
from ..utils.file_utils import ensure_output_directory
from ..utils.json_utils import write_json
from ..utils.logging_utils import log_run
from .adaptation_service import adapt_and_predict_stream
from .fleet_service import FleetService, featurize_records, physics_for_fleet
from .training_service import TrainingService

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ["label", "seed", "mode", "ssl", "mask_ratio", "lambda", "mae", "rmse",
                  "trainable_params", "mean_ms"]


@dataclass
class SeedData:
    source: FeatureDataset
    target: FeatureDataset


@dataclass
class ExperimentResult:
    """Long-format result tables of one ablation run."""

    ablation: pd.DataFrame
    mask_sweep: pd.DataFrame
    lambda_sweep: pd.DataFrame
    reports: dict[str, AdaptationReport] = field(default_factory=dict)


def _row(label: str, seed: int, lam: float, report: AdaptationReport) -> dict:
    cfg = report.config
    return {
        "label": label,
        "seed": seed,
        "mode": cfg.get("mode"),
        "ssl": cfg.get("ssl"),
        "mask_ratio": cfg.get("mask_ratio"),
        "lambda": lam,
        "mae": report.mae,
        "rmse": report.rmse,
        "trainable_params": report.trainable_params,
        "mean_ms": report.mean_ms,
    }


def summary_table(frame: pd.DataFrame, key: str = "label") -> pd.DataFrame:
    """Mean and standard deviation over seeds, in first-appearance order of ``key``."""
    if frame.empty:
        return frame
    order = list(dict.fromkeys(frame[key]))
    grouped = frame.groupby(key, sort=False).agg(
        mae_mean=("mae", "mean"),
        mae_std=("mae", "std"),
        rmse_mean=("rmse", "mean"),
        trainable_params=("trainable_params", "first"),
        mean_ms=("mean_ms", "mean"),
        seeds=("seed", "count"),
    )
    return grouped.loc[order].reset_index().fillna({"mae_std": 0.0})


def seeds_won(frame: pd.DataFrame, better: str, worse: str) -> int:
    """Seeds on which row ``better`` has a strictly lower MAE than row ``worse``."""
    pivot = frame.pivot_table(index="seed", columns="label", values="mae")
    return int(np.sum(pivot[better] < pivot[worse]))


def win_table(frame: pd.DataFrame, reference: str) -> pd.DataFrame:
    """Per row, the number of seeds it beats ``reference`` on."""
    labels = list(dict.fromkeys(frame["label"])) if not frame.empty else []
    if reference not in labels:
        return pd.DataFrame(columns=["label", "seeds_won", "seeds"])
    n_seeds = frame["seed"].nunique()
    return pd.DataFrame(
        [
            {"label": label, "seeds_won": seeds_won(frame, label, reference), "seeds": n_seeds}
            for label in labels
            if label != reference
        ]
    )


def render_text(frame: pd.DataFrame, title: str) -> str:
    """Aligned plain-text table."""
    if frame.empty:
        return f"{title}\n(no rows)\n"
    return f"{title}\n{frame.to_string(index=False, float_format=lambda v: f'{v:.4f}')}\n"


class ExperimentService:
    """Runs the ablation matrix of an ExperimentConfig over its seeds."""

    def __init__(self, config: ExperimentConfig, jobs: int = 1, progress: bool = False):
        self.config = config
        self.jobs = jobs
        self.progress = progress

    def prepare(self, seed: int) -> SeedData:
        """Simulate and featurize both fleets for ``seed``."""
        cfg = self.config
        fleets = FleetService(jobs=self.jobs, progress=self.progress)
        source_fleet = cfg.source.model_copy(update={"seed": cfg.source.seed + seed})
        target_fleet = cfg.target.model_copy(update={"seed": cfg.target.seed + seed})

        src_records, src_labels = fleets.simulate(source_fleet)
        tgt_records, tgt_labels = fleets.simulate(target_fleet)
        source = FeatureDataset(
            features=featurize_records(
                src_records, cfg.grid, source_fleet.base_params.capacity_nom,
                stride=cfg.source_stride,
            ),
            grid=cfg.grid,
            labels=src_labels,
            physics=physics_for_fleet(source_fleet),
            c_nom=source_fleet.base_params.capacity_nom,
        )
        target = FeatureDataset(
            features=featurize_records(
                tgt_records, cfg.target_grid, target_fleet.base_params.capacity_nom,
                observed_fraction=cfg.target_observed_fraction, stride=cfg.target_stride,
            ),
            grid=cfg.target_grid,
            labels=tgt_labels,
            physics=physics_for_fleet(target_fleet),
            c_nom=target_fleet.base_params.capacity_nom,
        )
        logger.info(f"Seed {seed}: {len(source)} source and {len(target)} target samples")
        return SeedData(source=source, target=target)

    def _adapt(
        self,
        state: ModelState,
        data: SeedData,
        tta: TtaConfig,
        seed: int,
        loss: Optional[LossConfig] = None,
    ) -> AdaptationReport:
        cfg = self.config
        return adapt_and_predict_stream(
            state,
            data.target.features,
            tta,
            cfg.optim.model_copy(update={"seed": seed}),
            loss or cfg.loss,
            cfg.target_grid,
            physics=data.target.physics,
            labels=data.target.labels,
            jobs=self.jobs,
        )

    def _probed(self, model: ModelConfig, data: SeedData, seed: int) -> ModelState:
        cfg = self.config
        trainer = TrainingService(
            model.model_copy(update={"seed": seed}),
            cfg.optim.model_copy(update={"seed": seed}),
            cfg.loss,
            progress=self.progress,
        )
        return trainer.linear_probe(trainer.pretrain(data.source).state, data.source)

    def run_seed(self, seed: int) -> tuple[list[dict], list[dict], list[dict], dict[str, AdaptationReport]]:
        cfg = self.config
        data = self.prepare(seed)
        state = self._probed(cfg.model, data, seed)
        # rows that override the architecture share one pretrained model per override
        variants: dict[str, ModelState] = {}

        ablation, masks, lambdas, reports = [], [], [], {}
        rows: list[AblationRow] = cfg.rows
        for row in rows:
            row_state = state
            if row.model:
                key = json.dumps(row.model, sort_keys=True)
                if key not in variants:
                    variants[key] = self._probed(cfg.model_for(row), data, seed)
                row_state = variants[key]
            report = self._adapt(row_state, data, row.tta, seed)
            lam = 0.0 if row.tta.ssl == "recon_only" or row.tta.mode == "none" else cfg.loss.lam
            ablation.append(_row(row.label, seed, lam, report))
            reports[f"seed{seed}/{row.label}"] = report
            log_run("ablate", report, seed=seed, notes=row.label)

        base = cfg.rows[0].tta if cfg.rows else TtaConfig()
        for ratio in cfg.mask_sweep:
            report = self._adapt(state, data, base.model_copy(update={"mask_ratio": ratio}), seed)
            masks.append(_row(f"mask={ratio:g}", seed, cfg.loss.lam, report))

        for lam in cfg.lambda_sweep:
            loss = cfg.loss.model_copy(update={"lam": lam})
            report = self._adapt(state, data, base.model_copy(update={"ssl": "pg_ssl"}), seed, loss)
            lambdas.append(_row(f"lambda={lam:g}", seed, lam, report))
        return ablation, masks, lambdas, reports

    def run(self, seeds: Optional[list[int]] = None) -> ExperimentResult:
        seeds = seeds if seeds is not None else self.config.seeds
        ablation, masks, lambdas = [], [], []
        reports: dict[str, AdaptationReport] = {}
        for seed in seeds:
            a, m, lam, r = self.run_seed(seed)
            ablation += a
            masks += m
            lambdas += lam
            reports.update(r)
        return ExperimentResult(
            ablation=pd.DataFrame(ablation, columns=RESULT_COLUMNS),
            mask_sweep=pd.DataFrame(masks, columns=RESULT_COLUMNS),
            lambda_sweep=pd.DataFrame(lambdas, columns=RESULT_COLUMNS),
            reports=reports,
        )

    def write(self, result: ExperimentResult, out_dir: Optional[str | Path] = None) -> Path:
        """
        Write ablation.csv, mask_sweep.csv, lambda_sweep.csv (when swept),
        ablation.txt and one JSON report per seed and row.
        """
        out = Path(out_dir) if out_dir is not None else self.config.output_dir
        ensure_output_directory(out / "ablation.csv")
        result.ablation.to_csv(out / "ablation.csv", index=False)
        result.mask_sweep.to_csv(out / "mask_sweep.csv", index=False)
        if not result.lambda_sweep.empty:
            result.lambda_sweep.to_csv(out / "lambda_sweep.csv", index=False)

        sections = [
            render_text(summary_table(result.ablation), "Ablation (mean over seeds)"),
            render_text(
                win_table(result.ablation, self.config.reference_row),
                f"Seeds won against '{self.config.reference_row}'",
            ),
            render_text(summary_table(result.mask_sweep), "Test-time mask ratio sweep"),
        ]
        if not result.lambda_sweep.empty:
            sections.append(render_text(summary_table(result.lambda_sweep), "Residual weight sweep"))
        (out / "ablation.txt").write_text("\n".join(sections), encoding="utf-8")

        for key, report in result.reports.items():
            seed_dir, label = key.split("/", 1)
            name = "".join(c if c.isalnum() else "_" for c in label).strip("_").lower()
            write_json(out / "reports" / seed_dir / f"{name}.json", report.model_dump(mode="json"))
        logger.info(f"Ablation results written to {out}")
        return out

